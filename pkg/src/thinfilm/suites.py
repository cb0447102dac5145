"""Acceptance checks shared by ``tfsolve verify`` and the test suite.

Every ``check_*`` function returns a :class:`CheckResult`; nothing here
prints.  Tolerances are module constants so tests and the command line
agree on them.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .mesh import PeriodicAxis, ScalarField, make_graded_mesh


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"criterion {self.criterion:2d} [{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def fitted_order(hs, errs) -> float:
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(np.asarray(hs, float)), np.log(np.asarray(errs, float)), 1)[0])


def _fmt(values):
    return "[" + ", ".join(f"{v:.2e}" for v in values) + "]"


# ---------------------------------------------------------------- 1: closed form

CLOSED_FORM_TOL = 1e-6
MODE_ORDER_MIN = 1.8


def closed_form_k0(x):
    xs = np.where(x > 0, x, 1.0)
    return np.where(x > 0, 0.5 * x * x * np.log(xs), 0.0) - 1.25 * x * x + 1.25


def check_1() -> CheckResult:
    from .model import ModeProblem, mode_ode_solve

    errs = []
    for M in (64, 128, 256, 512):
        m = make_graded_mesh(M, 2.0)
        s = mode_ode_solve(ModeProblem(0.0, 0.0, np.ones(M + 1)), m)
        errs.append(float(np.max(np.abs(s.v - closed_form_k0(m.nodes)))))
    Mref = 4096
    mref = make_graded_mesh(Mref, 2.0)
    ref = mode_ode_solve(ModeProblem(0.0, 0.0, np.cos(3 * mref.nodes)), mref)
    Ms, conv = (64, 128, 256, 512), []
    for M in Ms:
        m = make_graded_mesh(M, 2.0)
        s = mode_ode_solve(ModeProblem(0.0, 0.0, np.cos(3 * m.nodes)), m)
        conv.append(float(np.max(np.abs(s.v - ref.v[:: Mref // M]))))
    order = -fitted_order(Ms, conv)
    ok = max(errs) <= CLOSED_FORM_TOL and order >= MODE_ORDER_MIN
    return CheckResult(1, "mode-zero closed form", ok,
                       f"closed-form error {max(errs):.2e}, refinement order {order:.2f}",
                       {"closed_form_errors": errs, "refinement_errors": conv, "order": order})


# ---------------------------------------------------------------- 2: elliptic

ELLIPTIC_TOL = 1e-8


def check_2(seed: int = 0) -> CheckResult:
    from .model import dense_elliptic_solve, elliptic_solve

    axes = (PeriodicAxis(16), make_graded_mesh(32, 2.0))
    X, Y = np.meshgrid(axes[0].coordinates(), axes[1].coordinates(), indexing="ij")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, 4)
    f = ScalarField(axes, a[0] + a[1] * np.cos(X) * Y + a[2] * np.sin(2 * X) * np.cos(3 * Y) + a[3] * Y**2)
    rel = {}
    for bc in ("neumann0", "dirichlet0"):
        for p in (0.0, 2.0):
            u = elliptic_solve(f, bc, p).values
            v = dense_elliptic_solve(f, bc, p).values
            rel[f"{bc},p={p:g}"] = float(np.max(np.abs(u - v)) / max(np.max(np.abs(v)), 1e-300))
    worst = max(rel.values())
    return CheckResult(2, "spectral vs dense elliptic solve", worst <= ELLIPTIC_TOL,
                       f"max relative difference {worst:.2e}", rel)


# ---------------------------------------------------------------- 3: energy identities

IDENTITY_TOL = 1e-6


def check_3() -> CheckResult:
    from .model import ModeProblem, energy_identity_residual, explicit_mode0_solution, mode_ode_solve

    m = make_graded_mesh(512, 2.0)
    one = np.ones(513)
    r_neu = energy_identity_residual(explicit_mode0_solution(m, one), 0.0, 0.0, one)
    s = mode_ode_solve(ModeProblem(0.0, 0.0, one, "dirichlet0", "simply_supported_top"), m)
    r_dir = energy_identity_residual(s, 0.0, 0.0, one, "dirichlet")
    Ms, neu, dirs = (64, 128, 256, 512), [], []
    for M in Ms:
        mm = make_graded_mesh(M, 2.0)
        rhs = np.cos(3 * mm.nodes)
        s1 = mode_ode_solve(ModeProblem(2.0, 1.0, rhs), mm)
        s2 = mode_ode_solve(ModeProblem(2.0, 1.0, rhs, "dirichlet0", "simply_supported_top"), mm)
        neu.append(energy_identity_residual(s1, 2.0, 1.0, rhs))
        dirs.append(energy_identity_residual(s2, 2.0, 1.0, rhs, "dirichlet"))
    o_neu, o_dir = -fitted_order(Ms, neu), -fitted_order(Ms, dirs)
    ok = max(r_neu, r_dir) <= IDENTITY_TOL and min(o_neu, o_dir) >= 1.0
    return CheckResult(3, "energy identities", ok,
                       f"explicit residuals {r_neu:.1e}/{r_dir:.1e}, decay orders {o_neu:.2f}/{o_dir:.2f}",
                       {"neumann": neu, "dirichlet": dirs, "orders": (o_neu, o_dir)})


# ---------------------------------------------------------------- 4: Hardy constants

def hardy_corpus(n: int = 20, seed: int = 0, M: int = 256):
    """Seeded profiles; odd entries vanish at both ends."""
    x = make_graded_mesh(M, 2.0).nodes
    out = []
    for k in range(n):
        rng = np.random.default_rng([seed, k])
        c = rng.uniform(-1, 1, 5)
        v = c[0] + c[1] * x + c[2] * np.cos(np.pi * c[3] * 3 * x) + c[4] * x**3
        if k % 2:
            v = x * (1 - x) * (1 + c[0] * x + c[1] * np.sin(2 * x))
        out.append(v)
    return x, out


def check_4() -> CheckResult:
    from .model import HARDY_BOUND_DIRICHLET, HARDY_BOUND_TRACE, hardy_check

    x, corpus = hardy_corpus()
    one = hardy_check(x, np.ones_like(x)).constant_trace
    lin = hardy_check(x, 1 - x).constant_trace
    trace, dirichlet, ok = [], [], True
    for v in corpus:
        r = hardy_check(x, v)
        trace.append(r.constant_trace)
        if r.constant_dirichlet is not None:
            dirichlet.append(r.constant_dirichlet)
        ok &= r.passed
    ok &= abs(one - 1.0) <= 1e-10 and abs(lin - 1.0) <= 1e-10 and len(dirichlet) == len(corpus) // 2
    return CheckResult(4, "Hardy constants", bool(ok),
                       f"max trace constant {max(trace):.3f} (bound {HARDY_BOUND_TRACE:g}), "
                       f"max Dirichlet constant {max(dirichlet):.3f} (bound {HARDY_BOUND_DIRICHLET:g}), "
                       f"analytic cases {one:.12f}/{lin:.12f}",
                       {"trace": trace, "dirichlet": dirichlet, "analytic": (one, lin)})


# ---------------------------------------------------------------- 5: derivative check

FRECHET_TOL = 1e-6


def check_5(seeds=range(5)) -> CheckResult:
    from .newton import build_background, frechet_fd_check, make_problem

    worst, per = 0.0, {}
    for kind, h0 in (("strip", "wedge_perturbed"), ("disk", "cap_perturbed")):
        data = make_problem(kind, 2, 16, 32, T=0.1, nslabs=2, h0=h0)
        bg = build_background(data)
        for s in seeds:
            r = frechet_fd_check(data, bg, seed=s)
            per[f"{kind}/{s}"] = r["best_error"]
            worst = max(worst, r["best_error"])
    return CheckResult(5, "Frechet derivative vs finite differences", worst <= FRECHET_TOL,
                       f"worst best-step relative error {worst:.2e} over {len(per)} directions", per)


# ---------------------------------------------------------------- 6: linearized MMS

LINEAR_SPACE_ORDER = 2.0
LINEAR_TIME_ORDER = 0.8


def _linear_run(bottom, M, n, T, U, Nx=16):
    import sympy as sp

    from .grid import make_grid
    from .linear import LinearCoefficients, solve_linearized_dirichlet, solve_linearized_neumann
    from .mms import ExactField, linear_data

    om, lam, t = sp.symbols("omega lambda t")
    g = make_grid("strip", 2, Nx, M)
    W = ExactField(lam * (1 + sp.Rational(1, 10) * lam) + 0 * t, (om, lam), t)
    S = ExactField(sp.Rational(5, 100) * t * sp.sin(om) + 0 * lam, (om, lam), t)
    Ue = ExactField(U(om, lam, t), (om, lam), t)
    dt = T / n
    times = dt * np.arange(n + 1)
    w = np.array([W.values(g, tt) for tt in times])
    sig = np.array([S.values(g, tt)[:, 0] for tt in times])
    c = LinearCoefficients(g, dt, w, sig, 0.5, top="simply_supported")
    f, wall, top = linear_data(g, times, Ue, W, S, 0.5, bottom, "simply_supported")
    solve = solve_linearized_neumann if bottom == "neumann" else solve_linearized_dirichlet
    s = solve(c, f, wall, Ue.values(g, 0.0), top_data=top)
    arr = s.array()
    return max(float(np.max(np.abs(arr[k] - Ue.values(g, times[k])))) for k in range(n + 1))


def check_6() -> CheckResult:
    import sympy as sp

    space = lambda om, lam, t: (1 + t) * sp.cos(om) * (lam**2 + sp.sin(2 * lam) * lam**2)
    timef = lambda om, lam, t: sp.exp(t) * sp.cos(om) * (lam**2 + lam**3 / 3 - lam**4 / 5)
    metrics, ok, parts = {}, True, []
    for bottom in ("neumann", "dirichlet"):
        Ms = (16, 32, 64)
        es = [_linear_run(bottom, M, 4, 0.1, space) for M in Ms]
        ns = (4, 8, 16)
        et = [_linear_run(bottom, 32, n, 0.4, timef) for n in ns]
        os_, ot = -fitted_order(Ms, es), -fitted_order(ns, et)
        metrics[bottom] = {"space_errors": es, "space_order": os_, "time_errors": et, "time_order": ot}
        ok &= os_ >= LINEAR_SPACE_ORDER and ot >= LINEAR_TIME_ORDER
        parts.append(f"{bottom}: space {os_:.2f}, time {ot:.2f}")
    return CheckResult(6, "linearized manufactured solutions", bool(ok), "; ".join(parts), metrics)


# ---------------------------------------------------------------- 7: nonlinear MMS

NONLINEAR_ORDER = 2.0
CHORD_FACTOR = 0.5
MMS_TOL = 1e-10


def check_7(Ms=(16, 32, 64)) -> CheckResult:
    from .grid import make_grid
    from .newton import build_background, chord_newton_solve, manufactured_problem, residual_F, residual_norm

    errs, factors, floors, flags = [], [], [], []
    for M in Ms:
        g = make_grid("strip", 2, 8, M, 2.0)
        mp = manufactured_problem(g, T=0.1, nslabs=2, amp_rho=0.5)
        bg = build_background(mp.data)
        disc = residual_norm(*residual_F(mp.psi_exact(bg), bg, mp.data))
        h, rho, st = chord_newton_solve(mp.data, tol=MMS_TOL, max_iter=30, background=bg)
        errs.append(float(np.max(np.abs(rho.values[-1] - mp.rho_exact.values(g, bg.T)[..., 0]))))
        hist = st.history
        rat = [hist[k + 1] / hist[k] for k in range(1, len(hist) - 1) if hist[k + 1] > 10 * MMS_TOL]
        factors.append(max(rat) if rat else 0.0)
        floors.append((st.residual_norm, disc))
        flags.append(st.flag)
    order = -fitted_order(Ms, errs)
    ok = (order >= NONLINEAR_ORDER and max(factors) <= CHORD_FACTOR
          and all(f <= 10 * d + MMS_TOL for f, d in floors) and not any(flags))
    return CheckResult(7, "nonlinear manufactured solution", bool(ok),
                       f"front errors {_fmt(errs)} order {order:.2f}, chord factor {max(factors):.2f}",
                       {"errors": errs, "order": order, "factors": factors, "floors": floors, "flags": flags})


# ---------------------------------------------------------------- 8: short-time residual

def check_8(Ts=(0.2, 0.1, 0.05)) -> CheckResult:
    from .newton import StatePair, build_background, make_problem, residual_F, residual_norm

    metrics, ok, parts = {}, True, []
    for kind, h0 in (("strip", "wedge_perturbed"), ("disk", "cap_perturbed")):
        used, F0 = [], []
        for T in Ts:
            data = make_problem(kind, 2, 16, 33, T=T, nslabs=4, h0=h0)
            bg = build_background(data)
            used.append(bg.T)
            F0.append(residual_norm(*residual_F(StatePair.zeros(data.grid, bg.nslabs), bg, data)))
        mu = fitted_order(used, F0)
        metrics[kind] = {"T": used, "F0": F0, "mu": mu}
        ok &= mu > 0
        parts.append(f"{kind} mu={mu:.2f}")
    return CheckResult(8, "residual of the background shrinks with T", bool(ok), ", ".join(parts), metrics)


# ---------------------------------------------------------------- 9: physical diagnostics

MASS_DRIFT = 1e-3


def check_9(tol: float = 1e-8) -> CheckResult:
    from .newton import chord_newton_solve, diagnostics, make_problem, reconstruct_physical

    metrics, ok, parts = {}, True, []
    for kind, h0 in (("strip", "wedge_perturbed"), ("disk", "cap_perturbed")):
        data = make_problem(kind, 2, 16, 33, T=0.1, nslabs=4, h0=h0)
        h, rho, st = chord_newton_solve(data, tol=tol)
        d = diagnostics(reconstruct_physical(h, rho, data.grid, data.domain), data.grid, data, rho)
        good = (st.converged and d["mass_drift"] <= MASS_DRIFT and d["angle_error"] <= 10 * tol
                and d["positivity_ok"])
        ok &= good
        metrics[kind] = {"iterations": st.iterate_index, "mass_drift": d["mass_drift"],
                         "angle_error": d["angle_error"], "positivity_min": min(d["positivity_min"])}
        parts.append(f"{kind} drift {d['mass_drift']:.1e} angle {d['angle_error']:.1e}")
    return CheckResult(9, "mass, contact angle and positivity", bool(ok), ", ".join(parts), metrics)


# ---------------------------------------------------------------- 10: geometry identities

ROUNDTRIP_TOL = 1e-10
COMPOSE_TOL = 1e-8


def _random_collar_points(collar, n, rng):
    g0 = collar.gamma0
    lam = rng.uniform(0.0, 1.5 * g0, n)
    if collar.domain.kind == "strip":
        om = rng.uniform(-np.pi, np.pi, (n, collar.domain.N - 1))
    else:
        om = rng.uniform(-np.pi, np.pi, (n, 1))
    return collar.from_collar(om, lam)


def check_10(seed: int = 0, n: int = 1000) -> CheckResult:
    from .geometry import CollarMap, DomainSpec, apply_e_rho, contact_angle_factor
    from .grid import make_grid

    rng = np.random.default_rng(seed)
    rho1 = lambda om: 0.05 * np.sin(om[..., 0]) + 0.02 * np.cos(2 * om[..., 0])
    rho2 = lambda om: -0.03 * np.cos(om[..., 0] + 0.3)
    both = lambda om: rho1(om) + rho2(om)
    trip, comp = 0.0, 0.0
    for kind in ("strip", "disk"):
        cm = CollarMap(DomainSpec(kind, 2))
        pts = _random_collar_points(cm, n, rng)
        back = apply_e_rho(apply_e_rho(pts, rho1, cm, "forward"), rho1, cm, "inverse")
        trip = max(trip, float(np.max(np.abs(back - pts))))
        two = apply_e_rho(apply_e_rho(pts, rho2, cm, extension="constant"), rho1, cm, extension="constant")
        one = apply_e_rho(pts, both, cm, extension="constant")
        comp = max(comp, float(np.max(np.abs(two - one))))
    flat = contact_angle_factor(np.zeros(16), make_grid("strip", 2, 16, 16))
    exact_one = bool(np.all(flat == 1.0))
    ok = trip <= ROUNDTRIP_TOL and comp <= COMPOSE_TOL and exact_one
    return CheckResult(10, "collar map identities", ok,
                       f"round trip {trip:.1e}, composition {comp:.1e}, flat factor exact {exact_one}",
                       {"roundtrip": trip, "composition": comp, "flat_exact": exact_one})


# ---------------------------------------------------------------- 11: seminorms and interpolation

def check_11(gamma: float = 0.25, epsilon: float = 0.1) -> CheckResult:
    from .holder import PairPlan, interpolation_report, smooth_corpus, weighted_holder_seminorm

    corpus = smooth_corpus()
    plan = PairPlan(4000, 0)
    scale_err, sub_slack, mono, reports = 0.0, 0.0, True, []
    for k, f in enumerate(corpus):
        base = weighted_holder_seminorm(f, gamma, pairs=plan)
        for a in (2.0, -3.5, 0.1):
            s = weighted_holder_seminorm(f.with_values(a * f.values), gamma, pairs=plan)
            scale_err = max(scale_err, abs(s - abs(a) * base) / max(abs(a) * base, 1e-300))
        g = corpus[(k + 1) % len(corpus)]
        lhs = weighted_holder_seminorm(f.with_values(f.values + g.values), gamma, pairs=plan)
        rhs = base + weighted_holder_seminorm(g, gamma, pairs=plan)
        sub_slack = max(sub_slack, (lhs - rhs) / rhs)
        seq = [weighted_holder_seminorm(f, gamma, pairs=PairPlan(c, 0)) for c in (1000, 4000, 16000)]
        mono &= seq[0] <= seq[1] <= seq[2]
        reports.append(interpolation_report(f, gamma, epsilon).passed)
    ok = scale_err <= 1e-12 and sub_slack <= 1e-12 and mono and all(reports)
    return CheckResult(11, "seminorm properties and interpolation inequalities", bool(ok),
                       f"scaling {scale_err:.1e}, subadditivity slack {sub_slack:.1e}, "
                       f"monotone sampling {mono}, inequalities {sum(reports)}/{len(reports)}",
                       {"scaling": scale_err, "subadditivity": sub_slack, "monotone": mono, "reports": reports})


# ---------------------------------------------------------------- 12: determinism

DETERMINISM_CONFIG = """\
domain = strip
N = 2
Nx = 16
M = 32
T = 0.05
dt = 0.025
h0 = builtin:wedge_perturbed
g = builtin:contact
seed = 7
"""


def check_12(workdir: str | None = None) -> CheckResult:
    import shutil

    from .cli import main

    base = workdir or tempfile.mkdtemp(prefix="tfsolve-")
    out = os.path.join(base, "out")
    cfg = os.path.join(base, "run.cfg")
    with open(cfg, "w") as fh:
        fh.write(DETERMINISM_CONFIG + f"output_dir = {out}\n")
    runs = []
    for _ in range(2):
        shutil.rmtree(out, ignore_errors=True)
        code = main(["run", cfg])
        files = {}
        for name in sorted(os.listdir(out)) if os.path.isdir(out) else []:
            if name != "timings.txt":
                with open(os.path.join(out, name), "rb") as fh:
                    files[name] = fh.read()
        runs.append((code, files))
    same = runs[0][1] == runs[1][1]
    ok = runs[0][0] == 0 and runs[1][0] == 0 and same and len(runs[0][1]) > 0
    return CheckResult(12, "bit-identical reruns", ok,
                       f"exit codes {runs[0][0]}/{runs[1][0]}, {len(runs[0][1])} files identical {same}",
                       {"files": sorted(runs[0][1]), "identical": same})


CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 13)}

GROUPS = {
    "identities": (3, 4, 10),
    "oracles": (1, 2, 5),
    "mms": (6, 7),
    "interp": (11,),
    "all": tuple(range(1, 13)),
}


def run_group(name: str) -> list:
    return [CHECKS[i]() for i in GROUPS[name]]


__all__ = ["CheckResult", "CHECKS", "GROUPS", "run_group", "fitted_order", "closed_form_k0", "hardy_corpus"]

