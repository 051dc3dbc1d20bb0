"""Acceptance criteria A1-A9. Each test prints one PASS/FAIL line."""
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml

from egamtl import harness
from egamtl.balance import eccentric_vector, ega_step, LossHistory, ortho_only_step
from egamtl.cli import main
from egamtl.linalg import jacobi_eigh, project_align
from egamtl.metrics import (
    DEFAULT_SPECS,
    HIGHER,
    LOWER,
    MetricSpec,
    anchor_match,
    delta_m,
    pcc,
    ppi_error,
    r_squared,
    rmse,
    welch_t,
)
from egamtl.netcore import per_task_gradients, task_losses
from oracles import bisect_eigs, central_diff, eig2x2
from toy import toy_problem

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n{name} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def test_a1_orthogonal_alignment(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_orth, worst_gap = 0.0, -np.inf
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        m = int(np.exp(rng.uniform(np.log(8), np.log(4096))))
        G = rng.standard_normal((n, m)) * rng.uniform(0.1, 10, (n, 1))
        out = project_align(G)
        s2 = out.sigma_min**2
        worst_orth = max(worst_orth, np.linalg.norm(out.g_tilde @ out.g_tilde.T - s2 * np.eye(n)) / (s2 * n))
        Q = out.g_tilde / out.sigma_min
        best = np.linalg.norm(G - Q)
        R = np.linalg.qr(rng.standard_normal((200, m, n)))[0].transpose(0, 2, 1)  # 200 row-orthonormal n x m
        # ||G - R||_F^2 = ||G||^2 + n - 2 <G, R>
        dist = np.sqrt(np.maximum(np.sum(G * G) + n - 2 * np.einsum("ij,kij->k", G, R), 0.0))
        worst_gap = max(worst_gap, best - dist.min())
    elapsed = time.perf_counter() - t0
    ok = worst_orth <= 1e-8 and worst_gap <= 1e-9 and elapsed <= 60
    report("A1", ok, f"max orth residual/(sigma^2 n)={worst_orth:.2e}, max Procrustes gap={worst_gap:.2e}, {elapsed:.1f}s")


def test_a2_eigensolver_oracles(report):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    err2 = err3 = trace_err = 0.0
    for _ in range(500):
        B = rng.uniform(-1, 1, (2, 2))
        A = B + B.T
        lam = jacobi_eigh(A).eigenvalues
        err2 = max(err2, np.max(np.abs(lam - eig2x2(A))))
        trace_err = max(trace_err, abs(lam.sum() - np.trace(A)))
        B = rng.uniform(-1, 1, (3, 3))
        A = B + B.T
        lam = jacobi_eigh(A).eigenvalues
        err3 = max(err3, np.max(np.abs(lam - bisect_eigs(A))))
        trace_err = max(trace_err, abs(lam.sum() - np.trace(A)))
    elapsed = time.perf_counter() - t0
    ok = err2 <= 1e-8 and err3 <= 1e-8 and trace_err <= 1e-10 and elapsed <= 10
    report("A2", ok, f"2x2 err={err2:.1e}, 3x3 err={err3:.1e}, trace err={trace_err:.1e}, {elapsed:.1f}s")


def test_a3_eccentric_vector(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    sum_err, mono_ok, perm_err = 0.0, True, 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        lr = rng.uniform(0, 3, n)
        T = float(np.exp(rng.uniform(np.log(0.05), np.log(20))))
        k = eccentric_vector(lr, T).weights
        sum_err = max(sum_err, abs(k.sum() - n))
        order = np.argsort(lr)
        mono_ok &= bool(np.all(np.diff(k[order]) >= 0) and np.all(k > 0))
        perm = rng.permutation(n)
        perm_err = max(perm_err, np.max(np.abs(eccentric_vector(lr[perm], T).weights - k[perm])))
    flat = np.max(np.abs(eccentric_vector([5.0, 1.0, 1.0], 1e6).weights - 1))
    elapsed = time.perf_counter() - t0
    ok = sum_err <= 1e-12 and mono_ok and perm_err <= 1e-12 and flat <= 1e-5 and elapsed <= 5
    report("A3", ok, f"sum err={sum_err:.1e}, monotone={mono_ok}, perm err={perm_err:.1e}, T=1e6 dev={flat:.1e}, {elapsed:.2f}s")


def test_a4_gradients(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        net, batch = toy_problem(100 + seed, head_hidden=(4,) if seed % 2 else ())
        grads = per_task_gradients(net, batch)
        theta = net.trunk.get_flat()
        for task in range(3):

            def f(th, task=task):
                clone = net.copy()
                clone.trunk.set_flat(th)
                return task_losses(clone.predict(batch.x), batch)[task]

            fd = central_diff(f, theta)
            worst = max(worst, np.max(np.abs(grads.trunk[task] - fd)) / max(np.max(np.abs(fd)), 1e-8))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed <= 30
    report("A4", ok, f"max relative error={worst:.2e} over 20 nets x 3 losses, {elapsed:.1f}s")


def test_a5_difficulty_skew(report):
    t0 = time.perf_counter()
    cfg = harness.load_config(CONFIGS / "dominance.yaml")
    dataset = harness.build_dataset(cfg)
    norms = harness.init_gradient_norms(cfg, dataset)
    dominant = int(np.argmax(np.median(norms, axis=0)))
    others = np.delete(norms, dominant, axis=1).max(axis=1)
    dominance = float(np.median(norms[:, dominant] / others))

    wins, worst_ratio, hard_tasks = 0, 0.0, set()
    for seed in range(5):
        runs = {s: harness.train(replace(cfg, seed=seed, strategy=s), dataset)
                for s in ("equal_weight", "ortho_only", "ega")}
        # the hard task is the one equal weighting makes the least relative progress on
        hard = int(np.argmax(harness.progress_ratios(runs["equal_weight"], cfg.t_warm)))
        hard_tasks.add(harness.TASKS[hard])
        wins += runs["ega"].test_losses[hard] < runs["equal_weight"].test_losses[hard]
        worst_ratio = max(worst_ratio, float(np.max(runs["ega"].test_losses / runs["ortho_only"].test_losses)))
    elapsed = time.perf_counter() - t0
    ok = dominance >= 10 and wins >= 4 and worst_ratio <= 1.2 and elapsed <= 600
    report("A5", ok, f"dominance={dominance:.1f}x ({harness.TASKS[dominant]}), hard task={sorted(hard_tasks)}, "
           f"ega beats equal_weight in {wins}/5 seeds, max ega/ortho loss ratio={worst_ratio:.3f}, {elapsed:.0f}s")


def test_a6_warmup_equivalence(report):
    cfg = harness.load_config(CONFIGS / "dominance.yaml")
    cfg = replace(cfg, epochs=cfg.t_warm + 2)
    dataset = harness.build_dataset(cfg)
    identical, diverges = True, True
    for seed in range(3):
        a = harness.train(replace(cfg, seed=seed, strategy="ega"), dataset, keep_trajectory=True)
        b = harness.train(replace(cfg, seed=seed, strategy="ortho_only"), dataset, keep_trajectory=True)
        identical &= all(a.trunk_trajectory[e].tobytes() == b.trunk_trajectory[e].tobytes() for e in range(cfg.t_warm))
        diverges &= a.trunk_trajectory[-1].tobytes() != b.trunk_trajectory[-1].tobytes()
    # also at the level of a single step, for arbitrary histories
    rng = np.random.default_rng(0)
    h = LossHistory(3, 4)
    for e in range(1, 5):
        h.record(e, rng.uniform(0.1, 2, 3))
        G = rng.standard_normal((3, 40))
        identical &= ega_step(G, h, e).vector.tobytes() == ortho_only_step(G).vector.tobytes()
    report("A6", identical, f"bit-identical trunk states for epochs <= t_warm={cfg.t_warm} on 3 seeds "
           f"(diverge afterwards: {diverges})")


def test_a7_noise_protocol(report):
    t0 = time.perf_counter()
    cfg = replace(harness.ExperimentConfig(), repeats=2)
    protocols = harness.constant_protocols() + harness.abrupt_protocols()
    res = harness.noise_sweep(cfg, protocols)
    clean_hash = harness.build_dataset(cfg).train.digest()
    hashes_ok = all(h == clean_hash for h in res.train_hashes)

    snr_dev, counts_ok = 0.0, True
    for p in protocols:
        for rep in res.reports[f"{p.label}@{p.snr_db:g}dB"]:
            if p.type == "constant":
                snr_dev = max(snr_dev, max(abs(s - p.snr_db) for s in rep.snr_db))
            else:
                expected = sum(math.floor(p.fraction * n + 0.5) for n in rep.segments)
                counts_ok &= rep.doped == expected == len(rep.snr_db)
    elapsed = time.perf_counter() - t0
    ok = hashes_ok and snr_dev <= 0.1 and counts_ok and elapsed <= 300
    report("A7", ok, f"train hashes match clean={hashes_ok}, max SNR deviation={snr_dev:.1e} dB, "
           f"doped counts exact={counts_ok}, monotone constant-noise trend={res.monotone}, {elapsed:.0f}s")


def test_a8_metric_oracles(report):
    checks = {
        "rmse equal": rmse([1, 2, 3], [1, 2, 3]) == 0,
        "rmse offset": abs(rmse([1, 2, 3], [4, 5, 6]) - 3) <= 1e-9,
        "rmse [0,0]v[3,4]": abs(rmse([0, 0], [3, 4]) - math.sqrt(12.5)) <= 1e-9,
        "pcc affine": abs(pcc([1, 2, 4, 3], [5, 7, 11, 9]) - 1) <= 1e-9,
        "pcc negated": abs(pcc([1, 2, 4, 3], [-1, -2, -4, -3]) + 1) <= 1e-9,
        "pcc hand": abs(pcc([1, 2, 3], [1, 2, 4]) - 3 / math.sqrt(2 * 14 / 3)) <= 1e-9,
        "r2 perfect": r_squared([1, 2, 5], [1, 2, 5]) == 1,
        "r2 mean": abs(r_squared([1, 2, 6], [3, 3, 3])) <= 1e-9,
        "r2 negative": r_squared([1, 2, 6], [6, 2, 1]) < 0,
        "mdr hand": anchor_match([1.0, 2.0], [1.05, 2.5])[1] == 0.5
        and np.allclose(anchor_match([1.0, 2.0], [1.05, 2.5])[0], [0.05], atol=1e-9),
        "mdr perfect": anchor_match([1.0, 2.0], [1.0, 2.0])[1] == 0,
        "mdr empty": anchor_match([1.0, 2.0], [])[1] == 1,
        "ppi equal": ppi_error([800, 900], [800, 900]) == 0,
        "ppi offset": abs(ppi_error([800, 900], [808, 908]) - 8) <= 1e-9,
        "ppi hand": abs(ppi_error([800, 900], [810, 880]) - 15) <= 1e-9,
        "delta_m lower": abs(delta_m({("a", "e"): 9.0}, {("a", "e"): 10.0}, [MetricSpec("a", "e", LOWER)]) - 10) <= 1e-9,
        "delta_m cancel": abs(delta_m({("a", "x"): 1.1, ("b", "y"): 1.1}, {("a", "x"): 1.0, ("b", "y"): 1.0},
                                      [MetricSpec("a", "x", HIGHER), MetricSpec("b", "y", LOWER)])) <= 1e-9,
        "delta_m self": delta_m({s.key: 1.5 for s in DEFAULT_SPECS}, {s.key: 1.5 for s in DEFAULT_SPECS}) == 0,
        "welch identical": welch_t([1.0, 2.0, 4.0], [1.0, 2.0, 4.0]) == (0.0, 1.0),
    }
    failed = [k for k, v in checks.items() if not v]
    report("A8", not failed, f"{len(checks) - len(failed)}/{len(checks)} hand examples" + (f", failed: {failed}" if failed else ""))


def test_a9_reproducibility(report, tmp_path):
    train_cfg = tmp_path / "train.yaml"
    train_cfg.write_text((CONFIGS / "default.yaml").read_text())
    compare_cfg = tmp_path / "compare.yaml"
    data = yaml.safe_load((CONFIGS / "dominance.yaml").read_text())
    data.update(epochs=12, repeats=2)
    compare_cfg.write_text(yaml.safe_dump(data))
    same = {}
    for command, cfg in (("train", train_cfg), ("compare", compare_cfg)):
        outs = []
        for k in range(2):
            out = tmp_path / f"{command}{k}"
            assert main([command, "--config", str(cfg), "--seed", "42", "--out", str(out)]) == 0
            outs.append((out / "rows.csv").read_bytes())
        same[command] = outs[0] == outs[1] and len(outs[0]) > 0
    report("A9", all(same.values()), f"byte-identical rows: {same}")

