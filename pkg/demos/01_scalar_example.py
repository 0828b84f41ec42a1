# %% [markdown]
# An unstable scalar plant with an input-only cost
# ================================================
#
# A = 2, B = 1, Q = 0, S = 0, R = 1. The cost never penalizes the state, so
# with no terminal weight the optimal input is zero and the plant blows up.
# Run with `python demos/01_scalar_example.py`.

# %%
import numpy as np

from lqrhc import lqmodel as lqm
from lqrhc import riccati as ric
from lqrhc import stabdesign as sd

p = lqm.unstable_scalar_problem()
print("H =\n", p.H)

# %% [markdown]
# The Riccati equation has two solutions. P = 3 stabilizes (closed loop 0.5),
# P = 0 is the trivial "do nothing" solution (closed loop 2).

# %%
Ps = ric.solve_dare_stabilizing(p)
Pa = ric.solve_dare_antistabilizing(p)
for name, sol in [("stabilizing", Ps), ("antistabilizing", Pa)]:
    print(f"{name:16s} P={sol.P[0, 0]: .6f}  K={sol.K[0, 0]: .6f}  "
          f"A-BK={sol.closed_loop_spectrum.eigenvalues[0].real: .6f}")

print("all real solutions:", [float(P[0, 0]) for P in ric.enumerate_dare_solutions(p)])

# %% [markdown]
# H itself is only PSD. Rotating with a storage function lambda(x) = -c x^2
# makes it PD for any c strictly between 0 and 3.

# %%
for c in [0.0, 0.5, 1.0, 2.9, 3.0, 3.5]:
    chk = lqm.check_predissipativity(p.cost, p.sys, [[-c]])
    print(f"c={c:4.1f}  verdict={chk.verdict:12s}  lambda_min={chk.lambda_min: .4f}")

print("\nrotated cost with c = 1:\n", lqm.rotate_cost(p.cost, p.sys, [[-1.0]]).H)

# %% [markdown]
# Horizon length. With Pf = 0 every finite-horizon gain is zero. Any Pf > 0
# eventually stabilizes, but small weights need long horizons.

# %%
for Pf in [0.0, 1e-6, 1e-4, 1e-2, 1.0]:
    rep = sd.min_stabilizing_horizon(p, [[Pf]], 200)
    print(f"Pf={Pf:7.0e}  N_min={rep.min_stabilizing_N if rep.found else 'never'}")

radii = sd.closed_loop_eigs_vs_N(p, [[1e-4]], 12)
print("\n|A - B K_N| for Pf=1e-4:", np.round(radii, 4))
