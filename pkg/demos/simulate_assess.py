"""Simulate a dataset, pick the level of description, estimate the Hamiltonian.

Equivalent CLI::

    thermoscope simulate --preset worked-qubit --seed 7 --output data.json
    thermoscope assess --input data.json

Run with ``python3 demos/simulate_assess.py``.
"""

import numpy as np

from thermoscope import assess, preset_config, simulate_dataset

config = preset_config("worked-qubit", seed=7)
ds = simulate_dataset(config)
print(f"R = {ds.R} preparations, sizes {sorted(set(int(n) for n in ds.sizes))}, m = {ds.m} observables")

report = assess(ds)
print(f"\n{'label':<12} {'p':>2} {'log L':>12} {'alpha':>10} reliable")
for s in report.scores:
    alpha = "-" if s.alpha is None else f"{s.alpha:.3g}"
    print(f"{s.label:<12} {s.p:>2} {s.log_likelihood:>12.3f} {alpha:>10} {s.reliable}")
print(f"\nwinner: {report.winner} (p = {report.winner_p}), verdict: {report.verdict}")

est = report.hamiltonian
if est is not None:
    print(f"xi = {np.round(est.xi, 4)}")
    print(f"beta_bar = {est.beta_bar}")
    print(f"per-sample beta = {np.round(est.per_sample_beta, 4)}")
    print("margins:", {k: round(v, 3) for k, v in report.margins.items()})
for w in report.warnings:
    print("warning:", w)
