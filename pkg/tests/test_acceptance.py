"""Acceptance criteria, one test and one summary line per criterion.

Each test records its verdict in ``conftest.ACCEPTANCE``; the verdicts are
printed in a section at the end of the pytest run.
"""
import time

import numpy as np
import pytest

from lqrhc import lqmodel as lqm
from lqrhc import matkit as mk
from lqrhc import mpc
from lqrhc import riccati as ric
from lqrhc import stabdesign as sd
from lqrhc.errors import InfeasibleQp
from lqrhc.matkit import Definiteness

from conftest import ACCEPTANCE, scalar_recursion
from oracles import enumerate_qp, qp_arrays, random_mpc_qp


def verdict(key, checks, elapsed=None, limit=None):
    """Record ``checks`` (name -> bool) and assert them all."""
    if limit is not None:
        checks = {**checks, f"runtime {elapsed:.2f}s < {limit:g}s": elapsed < limit}
    failed = [k for k, ok in checks.items() if not ok]
    detail = "; ".join(f"{k}={'ok' if ok else 'FAIL'}" for k, ok in checks.items())
    ACCEPTANCE[key] = (not failed, detail)
    print(f"criterion {key}: {'PASS' if not failed else 'FAIL'}  {detail}")
    assert not failed, f"criterion {key} failed: {', '.join(failed)}"


def s(x):
    return float(np.asarray(x).reshape(-1)[0])


def test_criterion_1_example_dare_solutions():
    t0 = time.perf_counter()
    p = lqm.unstable_scalar_problem()
    Ps = ric.solve_dare_stabilizing(p)
    Pa = ric.solve_dare_antistabilizing(p)
    elapsed = time.perf_counter() - t0
    verdict("1", {
        "P_s=3": abs(s(Ps.P) - 3.0) <= 1e-9,
        "K_s=1.5": abs(s(Ps.K) - 1.5) <= 1e-9,
        "A-BK_s=0.5": abs(s(p.A - p.B @ Ps.K) - 0.5) <= 1e-9,
        "P_a=0": Pa.exists and abs(s(Pa.P)) <= 1e-9,
        "K_a=0": Pa.exists and abs(s(Pa.K)) <= 1e-9,
        "A-BK_a=2": Pa.exists and abs(s(p.A - p.B @ Pa.K) - 2.0) <= 1e-9,
    }, elapsed, 1.0)


def test_criterion_2_rotated_cost():
    p = lqm.unstable_scalar_problem()
    chk = lqm.check_predissipativity(p.cost, p.sys, [[-1.0]])
    verdict("2", {
        "H_Lambda=[[3,2],[2,2]] exact": np.array_equal(chk.H_rotated, [[3.0, 2.0], [2.0, 2.0]]),
        "classified PD": chk.definiteness is Definiteness.PD,
    })


def test_criterion_3_reverse_equation():
    p = lqm.singular_reverse_problem()
    d = ric.build_rdare(p)
    Pbar = ric.solve_rdare_stabilizing(p)
    t = ric.antistab_existence_test(p)
    anti = ric.solve_dare_antistabilizing(p)
    verdict("3", {
        "Abar=1": abs(s(d.Abar) - 1) <= 1e-12,
        "Bbar=1": abs(s(d.Bbar) - 1) <= 1e-12,
        "Qbar=-1": abs(s(d.Qbar) + 1) <= 1e-12,
        "Sbar=0": abs(s(d.Sbar)) <= 1e-12,
        "Rbar=0": abs(s(d.Rbar)) <= 1e-12,
        "Pbar_s=-1": abs(s(Pbar) + 1) <= 1e-12,
        "det=0": abs(t.determinant) <= 1e-12,
        "verdict not_exists": t.verdict == "not_exists" and not anti.exists,
    })


def test_criterion_4_min_horizon():
    t0 = time.perf_counter()
    p = lqm.unstable_scalar_problem()
    small = sd.min_stabilizing_horizon(p, [[1e-4]], 200)
    zero = sd.min_stabilizing_horizon(p, [[0.0]], 200)
    elapsed = time.perf_counter() - t0
    verdict("4", {
        "Pf=1e-4 -> N_min=8": small.min_stabilizing_N == 8,
        "Pf=0 -> NotFound up to 200": not zero.found and len(zero.records) == 200,
    }, elapsed, 1.0)


def test_criterion_5_eigenvalue_sweep():
    p = lqm.unstable_scalar_problem()
    P = scalar_recursion(1e-4, 7)
    oracle = 2.0 / (1.0 + P[7])
    rho = sd.closed_loop_eigs_vs_N(p, [[1e-4]], 8)[7]
    verdict("5", {
        f"rho(N=8)={rho:.10f} vs oracle {oracle:.10f}": abs(rho - oracle) <= 1e-6,
        "oracle ~ 0.9710": abs(oracle - 0.9710) <= 5e-5,
    })


def test_criterion_6_constrained_closed_loop():
    p = lqm.unstable_scalar_problem()
    cons = lqm.box_constraints(1, 1, x_max=1.0)
    t0 = time.perf_counter()
    traces = {}
    for N in range(1, 21):
        for Pf in (0.0, 1e-4):
            m = mpc.MpcProblem(p.with_terminal([[Pf]]), N, cons)
            traces[N, Pf] = mpc.simulate(m, [1.0], 500)
    elapsed = time.perf_counter() - t0

    final = {k: abs(tr.final_state[0]) for k, tr in traces.items()}
    too_small = [N for N in range(1, 21) if final[N, 0.0] < 1e-2]
    worst = 0.0
    for tr in traces.values():
        for j in range(len(tr.inputs)):
            worst = max(worst, float(np.max(cons.values(tr.states[j], tr.inputs[j]))))
    verdict("6", {
        f"N=9,Pf=1e-4: |x_500|={final[9, 1e-4]:.2e} <= 1e-6": final[9, 1e-4] <= 1e-6,
        "Pf=0: |x_500| >= 1e-2 for all N<=20"
        + (f" (below for N={too_small[0]}..{too_small[-1]}, "
           f"|x_500|(N=20)={final[20, 0.0]:.2e})" if too_small else ""): not too_small,
        f"constraint violation {worst:.1e} <= 1e-8": worst <= 1e-8,
    }, elapsed, 10.0)


def _property_instance(seed):
    n_x, n_u = 1 + seed % 4, 1 + (seed // 4) % 2
    p, st = lqm.generate_predissipative_instance(seed, n_x, n_u)
    L = st.Lambda
    r = np.random.default_rng(10_000 + seed)
    out = {}

    Ps = ric.solve_dare_stabilizing(p, L)
    Pa = ric.solve_dare_antistabilizing(p, L)
    Pbar = Pa.P if Pa.exists else Pa.Pbar_s

    # a. inner matrix PD on every computed solution
    out["a"] = ric.verify_inner_pd(p, Ps.P) and (not Pa.exists or ric.verify_inner_pd(p, Pa.P))

    # b. strict ordering of the two solutions
    out["b"] = (not Pa.exists) or mk.lambda_min(Ps.P - Pa.P) > 0

    # c. rotation equivalence over N <= 10
    P0 = Pbar + np.eye(n_x)
    tr = ric.iterate(p, 10, P0=P0)
    rt = ric.iterate(lqm.rotate_problem(p, L), 10, P0=P0 + L)
    ok = True
    for n in range(1, 11):
        ok &= np.max(np.abs(tr.K(n) - rt.K(n))) <= 1e-9 * max(1.0, np.abs(tr.K(n)).max())
        ok &= np.max(np.abs(rt.P(n) - tr.P(n) - L)) <= 1e-9 * max(1.0, np.abs(rt.P(n)).max())
    out["c"] = bool(ok)

    # d. pre-stabilization: congruence and invariance of the DARE solution
    Khat = r.standard_normal((n_u, n_x))
    q = lqm.prestabilize(p, Khat)
    _, Kq = ric.riccati_step(Ps.P, q)
    out["d"] = (lqm.congruence_residual(p, L, Khat) <= 1e-10
                and ric.dare_residual(q, Ps.P) <= 1e-9 * mk.scale_of(Ps.P)
                and np.allclose(Kq, Ps.K - Khat, atol=1e-9 * max(1, np.abs(Ps.K).max())))

    # e. rotation by -Pbar_s gives a PSD stage cost
    d = lqm.check_predissipativity(p.cost, p.sys, -Pbar).definiteness
    out["e"] = d in (Definiteness.PSD, Definiteness.PD)

    # f. monotone iterates from P_a + alpha Xi_s converge to P_s
    if Pa.exists:
        P = Pa.P + 0.5 * (Ps.P - Pa.P)
        mono, conv = True, False
        for _ in range(10_000):
            Pn, _ = ric.riccati_step(P, p)
            mono &= mk.lambda_min(Pn - P) >= -1e-8
            P = Pn
            if mk.fro(P - Ps.P) <= 1e-6 * mk.scale_of(Ps.P):
                conv = True
                break
        out["f"] = bool(mono and conv)
    else:
        out["f"] = None

    # g. P_s + Lambda PD for every strict certificate at hand
    certs = [L] + [c.storage.Lambda for c in lqm.suggest_storage(p) if c.check.strict]
    out["g"] = all(mk.is_pd(Ps.P + C) for C in certs)

    # h. eventual Lyapunov certification, and certification implies stability
    Pf = Pbar + 1e-3 * np.eye(n_x)
    certs = sd.lyapunov_sweep(p, L, 500, Pf=Pf)
    tr = ric.iterate(p.with_terminal(Pf), 500)
    certified = [c.N for c in certs if c.certified]
    stable = all(mk.spectral_radius(p.A - p.B @ tr.K(N)) < 1.0 for N in certified)
    out["h"] = bool(certified) and stable
    out["P_a exists"] = Pa.exists
    return out


def test_criterion_7_property_suite():
    n_inst = 200
    t0 = time.perf_counter()
    results = [_property_instance(seed) for seed in range(n_inst)]
    elapsed = time.perf_counter() - t0
    checks = {}
    for key in "abcdefgh":
        vals = [r[key] for r in results if r[key] is not None]
        checks[f"7{key} {sum(vals)}/{len(vals)}"] = all(vals) and len(vals) > 0
    n_pa = sum(r["P_a exists"] for r in results)
    checks[f"instances {n_inst} (P_a in {n_pa})"] = n_inst >= 200
    verdict("7", checks, elapsed, 60.0)


def test_criterion_8_qp_oracle():
    t0 = time.perf_counter()
    worst, mismatched, n_inf = 0.0, [], 0
    for seed in range(50):
        qp, xhat = random_mpc_qp(seed)
        H, g, G, h, c = qp_arrays(qp, xhat)
        ref = enumerate_qp(H, g, G, h)
        try:
            val = mpc.solve_qp(qp, xhat).value
        except InfeasibleQp:
            n_inf += 1
            if ref is not None:
                mismatched.append(seed)
            continue
        if ref is None:
            mismatched.append(seed)
            continue
        worst = max(worst, abs(val - (ref[1] + c)))
    elapsed = time.perf_counter() - t0
    verdict("8", {
        f"max |value - enumeration| = {worst:.1e} <= 1e-8": worst <= 1e-8,
        f"feasibility agrees on 50 ({n_inf} infeasible)": not mismatched,
    }, elapsed, 5.0)
