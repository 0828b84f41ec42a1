# %% [markdown]
# Constrained receding-horizon control
# ====================================
#
# The scalar example again, now with |x| <= 1. Each step solves a dense QP
# (inputs stacked over the horizon) with a dual active-set method and applies
# the first input.

# %%
import numpy as np

from lqrhc import lqmodel as lqm
from lqrhc import mpc

p = lqm.unstable_scalar_problem()
box = lqm.box_constraints(1, 1, x_max=1.0)

# %%
qp = mpc.condense(mpc.MpcProblem(p.with_terminal([[1e-4]]), 9, box))
res = mpc.solve_qp(qp, [1.0])
print("first QP: u* =", np.round(res.x, 4))
print("active rows:", res.active_set)

# %% [markdown]
# State after 500 steps for each horizon. With Pf = 1e-4 the loop converges
# once N >= 8. With Pf = 0 the state settles at a nonzero point that halves
# with every extra step of horizon.

# %%
print(" N   Pf=0          Pf=1e-4      status(Pf=0)")
for N in range(1, 21):
    row = []
    for Pf in (0.0, 1e-4):
        tr = mpc.simulate(mpc.MpcProblem(p.with_terminal([[Pf]]), N, box), [1.0], 500)
        row.append(tr)
    print(f"{N:2d}  {abs(row[0].final_state[0]):.3e}    {abs(row[1].final_state[0]):.3e}"
          f"    {row[0].status}")
