"""
Bounding a mean that is known in closed form
============================================

Birth at rate 5*k1, death at rate k2*X.  The stationary law is Poisson with
mean 5*k1/k2 = 50, so the SDP bracket should close on that number.
"""

import numpy as np

from momentbound.netspec import load_network
from momentbound.momeq import TruncationOrder, assemble_moment_equations
from momentbound.sdpbuild import build_problem, default_scale, flip_direction
from momentbound import cli, solver, ssa

net = load_network("../networks/birth_death.json")
exact = 5 * 2 / 0.2

# the moment equations are exact rational linear relations
t = TruncationOrder(2, 0)
system = assemble_moment_equations(net, t)
print("moment equations:", system.A.shape[0], "rows")

# min and max of E[X] over all moment vectors consistent with them
mean = cli.parse_target(net, "X")
scale = default_scale(net, ssa.rate_equation_mean(net))
lo = solver.solve(build_problem(net, t, mean, "min", scale=scale))
hi = solver.solve(flip_direction(build_problem(net, t, mean, "min", scale=scale)))
print(f"bracket [{lo.value:.8f}, {hi.value:.8f}]  exact {exact}")

# independent check: stationary vector of the chain cut at 400 molecules
m, tail = ssa.truncated_chain_stationary(net, [2, 0.2], 400)
print(f"truncated chain mean {m:.10f}  tail mass {tail:.1e}")
assert abs(lo.value - exact) < 1e-6 and abs(hi.value - exact) < 1e-6
