"""Temperature sensitivity of EGA on the difficulty-skew benchmark.

    python scripts/run_temperature.py --out runs/temperature
"""
import argparse
from pathlib import Path

from egamtl import harness
from egamtl.harness import StrategySpec
from egamtl.metrics import write_rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/dominance.yaml")
    p.add_argument("--out", default="runs/temperature")
    p.add_argument("--temperatures", type=float, nargs="+", default=[0.1, 0.5, 1.0, 2.0, 10.0])
    args = p.parse_args()

    cfg = harness.load_config(args.config)
    specs = [StrategySpec("ortho_only")] + [StrategySpec("ega", t) for t in args.temperatures]
    res = harness.compare_strategies(cfg, specs, "equal_weight")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(res.rows, out / "rows.csv")
    print(harness.format_table(res.summary))


if __name__ == "__main__":
    main()
