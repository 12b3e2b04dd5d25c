"""
Extrinsic noise and the width of the bound
==========================================

Dimerization with two gamma distributed rate constants.  The bound on E[X]
tightens as more parameter moments enter the relaxation (sigma), and widens
as the allowed correlation r between the two parameters grows.
"""

import json

import numpy as np

from momentbound import cli

doc = json.load(open("../networks/dimerization.json"))
sigmas = [1, 2, 3, 4]
r_values = [0.0, 0.5, 1.0]

rows = cli.run_sweep(doc, r_values, sigmas, rho=5, target="X")
gap = np.full((len(r_values), len(sigmas)), np.nan)
# each row is (r, sigma, lb, ub, lb_status, ub_status, seconds)
for r, s, lb, ub, lb_status, ub_status, _ in rows:
    if lb_status == ub_status == "optimal":
        gap[r_values.index(r), sigmas.index(s)] = ub - lb

print("gap (ub - lb) of E[X]; rows r, columns sigma")
print("r     " + "".join(f"{s:>10d}" for s in sigmas))
for r, g in zip(r_values, gap):
    print(f"{r:<6}" + "".join(f"{v:10.4f}" for v in g))

# the same grid as CSV, as written by `momentbound sweep`
print(cli.sweep_csv(rows, timing=False))
