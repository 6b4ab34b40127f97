"""
A small sweep and its competitive ratios
=========================================

Runs every publisher against two parameter points of each adaptive
advertiser, over three seeds and three short days, then prints the table
that the ``adxhba sweep`` command writes to disk.
"""

from adxhba import ExperimentConfig, run_sweep

cfg = ExperimentConfig(days=3, impressions_per_day=100, points=2, seeds=[0, 1, 2],
                       advertisers=["greedy", "ltb", "ucb"], km={"k": 60, "l": 3, "k_c": 10},
                       type_points=2)
report = run_sweep(cfg)
print(report.table(), end="")

# the per-seed rows are what the CSV file holds
print(report.to_csv().splitlines()[:4])
