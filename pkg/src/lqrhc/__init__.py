"""Linear-quadratic receding-horizon stability toolkit.

Riccati solutions (forward and reverse), cost rotation and pre-dissipativity
certificates, terminal-cost design, horizon analysis and constrained MPC.
"""
__version__ = "0.1.0"

from . import errors, matkit, lqmodel, riccati, stabdesign, mpc  # noqa: E402

__all__ = ["errors", "matkit", "lqmodel", "riccati", "stabdesign", "mpc", "__version__"]
