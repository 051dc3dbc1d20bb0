"""Difficulty-skew experiment: equal_weight vs ortho_only vs EGA when one
task's trunk gradient dominates the others.

    python scripts/run_dominance.py --config configs/dominance.yaml --out runs/dominance
"""
import argparse
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from egamtl import harness
from egamtl.metrics import write_rows

STRATEGIES = ("equal_weight", "ortho_only", "ega")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/dominance.yaml")
    p.add_argument("--out", default="runs/dominance")
    p.add_argument("--seeds", type=int, default=5)
    args = p.parse_args()

    cfg = harness.load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = harness.build_dataset(cfg)
    norms = np.median(harness.init_gradient_norms(cfg, dataset), axis=0)
    print("median trunk gradient norm at init:", {t: round(float(v), 4) for t, v in zip(harness.TASKS, norms)})

    rows, per_seed = [], []
    for seed in range(cfg.seed, cfg.seed + args.seeds):
        runs = {s: harness.train(replace(cfg, seed=seed, strategy=s), dataset) for s in STRATEGIES}
        hard = int(np.argmax(harness.progress_ratios(runs["equal_weight"], cfg.t_warm)))
        per_seed.append({
            "seed": seed,
            "hard_task": harness.TASKS[hard],
            **{f"{s}_test_loss": runs[s].test_losses.tolist() for s in STRATEGIES},
        })
        for r in runs.values():
            rows.extend(r.rows())
        losses = "  ".join(f"{s}={runs[s].test_losses[hard]:.4f}" for s in STRATEGIES)
        print(f"seed {seed}: hard task {harness.TASKS[hard]}: {losses}")

    write_rows(harness.sort_rows(rows), out / "rows.csv")
    (out / "per_seed.json").write_text(json.dumps(per_seed, indent=2))


if __name__ == "__main__":
    main()
