# %% [markdown]
# Terminal costs from the reverse Riccati equation
# ================================================
#
# For a random pre-dissipative problem (indefinite stage cost, but some
# storage matrix makes the rotated cost PD) we build Pf = Pbar_s + E and
# watch the receding-horizon loop become stable as N grows.

# %%
import numpy as np

from lqrhc import lqmodel as lqm
from lqrhc import matkit as mk
from lqrhc import riccati as ric
from lqrhc import stabdesign as sd

p, storage = lqm.generate_predissipative_instance(seed=3, n_x=3, n_u=1)
print("eigenvalues of H:", np.round(mk.sym_eigvals(p.H), 3))
print("rotated cost verdict:",
      lqm.check_predissipativity(p.cost, p.sys, storage).verdict)

# %% [markdown]
# The two Riccati solutions bracket every other solution; their gap Xi_s is PD.

# %%
Ps = ric.solve_dare_stabilizing(p, storage)
Pa = ric.solve_dare_antistabilizing(p, storage)
print("antistabilizing solution exists:", Pa.exists)
Pbar = Pa.P if Pa.exists else Pa.Pbar_s
print("lambda_min(P_s - P_a) =", mk.lambda_min(Ps.P - Pbar))

# %% [markdown]
# Design and horizon search. The zero terminal cost is compared with the
# designed one; Pf = P_a is the limiting case that never stabilizes.

# %%
design = sd.design_terminal(p, 1e-3 * np.eye(3), storage)
print("basis:", design.basis)
for tag, Pf in [("zero", np.zeros((3, 3))), ("designed", design.Pf), ("P_a", Pbar)]:
    rep = sd.min_stabilizing_horizon(p, Pf, 100)
    print(f"{tag:9s} N_min={rep.min_stabilizing_N if rep.found else 'not within 100'}")

# %% [markdown]
# Lyapunov certificate: the rotated value function decreases along the
# closed loop. Certification is stricter than the eigenvalue test.

# %%
certs = sd.lyapunov_sweep(p, storage, 60, Pf=design.Pf)
first = next((c.N for c in certs if c.certified), None)
print("first certified horizon:", first)
print("margin there:", certs[first - 1].margin if first else None)
