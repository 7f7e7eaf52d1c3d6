"""
Watching the error decay
========================

Monte Carlo run of the whole pipeline for a model whose leading error term
is visible: uniform data, uniform target, and an estimator bias
0.9 cos(2 pi x) N^-0.45.  The empirical ratio in corner cells should fall
like N^-0.45.  Takes a few minutes on one core; pass a replication count as
the first argument to go faster (at the price of noise).
"""
from pathlib import Path
import sys

from gds.config import load_experiment
from gds.experiment import compare_to_theory, run_experiment

path = Path(__file__).resolve().parents[1] / "configs" / "rate_demo.json"
overrides = [f"replications={int(sys.argv[1])}"] if len(sys.argv) > 1 else []
cfg, _, _ = load_experiment(path, overrides)

results = run_experiment(cfg)
report = compare_to_theory(cfg, results)

print(f"predicted exponent: {report['rate_exponent']}")
for cell in report["cells"]:
    print(f"\ncell {cell['cell_id']}:   N    empirical      se     predicted")
    for row in cell["points"]:
        print(f"{row['N']:14d}  {row['ratio_minus_one']:+.4f}   {row['std_err']:.4f}   {row['predicted']:+.4f}")
    slope = cell["checks"]["slope"]
    print(f"  fitted slope {slope.get('slope', float('nan')):.3f} (target {slope['target']}), verdict {cell['verdict']}")
