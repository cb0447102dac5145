"""Command line entry point ``tfsolve``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import warnings

import numpy as np

from .errors import ConfigError, OutputError, ThinFilmError
from .mesh import atomic_write_text

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


def _num(v) -> str:
    return f"{float(v):.17g}"


def table_text(header, columns) -> str:
    cols = [np.ravel(c) for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(_num(v) for v in row))
    return "\n".join(lines) + "\n"


def _grid_columns(grid):
    shape = grid.shape
    return [np.broadcast_to(c, shape) for c in grid.coords()]


# ---------------------------------------------------------------- run

def _build_problem(cfg):
    from .config import table_on_grid
    from .geometry import BoundaryField, DomainSpec
    from .grid import make_grid
    from .newton import ProblemData, builtin_h0, constant_g, g_from_boundary

    grid = make_grid(cfg.domain, cfg.N, cfg.Nx, cfg.M, cfg.grading_q)
    domain = DomainSpec(cfg.domain, cfg.N)
    kind, _, arg = cfg.h0.partition(":")
    if kind == "builtin":
        h0 = builtin_h0(arg, grid, cfg.slope)
    else:
        h0 = table_on_grid(arg, _grid_columns(grid), grid.shape)
    kind, _, arg = cfg.g.partition(":")
    if kind == "builtin":
        g = constant_g(-cfg.slope if arg == "contact" else -2.0 * cfg.slope)
    else:
        tcoords = [np.broadcast_to(c[..., 0], grid.tshape) for c in grid.coords()[:-1]]
        vals = table_on_grid(arg, tcoords, grid.tshape)
        g = g_from_boundary(BoundaryField(grid.tangential, vals[None], cfg.T, 0.0))
    return ProblemData(grid, h0, g, domain, cfg.gamma, cfg.T, cfg.nslabs)


def _report(cfg, data, state, diag, norm, status) -> str:
    bg = state.background
    out = ["[config]", f"source = {cfg.source}", f"sha256 = {cfg.digest}", cfg.echo().rstrip(), "",
           "[background]", f"T_used = {_num(bg.T)}", f"nslabs = {bg.nslabs}", f"bisections = {len(bg.bisections)}"]
    for k in sorted(bg.margins):
        out.append(f"margin[{k}] = {_num(bg.margins[k])}")
    out += ["", "[newton]", f"status = {status}", f"converged = {state.converged}",
            f"flag = {state.flag or 'none'}", f"iterations = {state.iterate_index}",
            f"residual = {_num(state.residual_norm)}"]
    out += [f"history[{k}] = {_num(r)}" for k, r in enumerate(state.history)]
    out += ["", "[diagnostics]"]
    if diag is None:
        out.append("unavailable")
    else:
        out += [f"mass[{k}] = {_num(m)}" for k, m in enumerate(diag["mass"])]
        out += [f"mass_drift = {_num(diag['mass_drift'])}",
                f"positivity_min = {_num(min(diag['positivity_min']))}",
                f"positivity_ok = {diag['positivity_ok']}",
                f"angle_error = {_num(diag['angle_error'])}"]
    out += ["", "[norm_monitor]", norm.rstrip()]
    return "\n".join(out) + "\n"


def cmd_run(args) -> int:
    from .config import load_config
    from .holder import PairPlan, WeightFunction, c4gamma_norm
    from .mesh import ScalarField
    from .newton import NewtonOptions, chord_newton_solve, diagnostics, reconstruct_physical

    t0 = time.perf_counter()
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    data = _build_problem(cfg)
    opts = NewtonOptions(cfg.newton_tol, cfg.max_newton, cfg.picard_tol, cfg.max_picard, cfg.method)
    t1 = time.perf_counter()
    h, rho, state = chord_newton_solve(data, options=opts)
    t2 = time.perf_counter()
    grid, out = data.grid, cfg.output_dir
    status = "ok" if state.converged else "failed"
    diag = norm = None
    try:
        traj = reconstruct_physical(h, rho, grid, data.domain)
        diag = diagnostics(traj, grid, data, rho)
    except ThinFilmError as exc:
        status = f"failed ({exc})"
    try:
        last = ScalarField(grid.axes, h.array()[-1])
        norm = c4gamma_norm(last, cfg.gamma, WeightFunction("wall_normal"), PairPlan(2000, cfg.seed)).to_text()
    except ThinFilmError as exc:
        norm = f"unavailable ({exc})"
    cols = _grid_columns(grid)
    head = [f"x{k + 1}" for k in range(grid.ndim)]
    H = h.array()
    for i in range(1, H.shape[0]):
        atomic_write_text(os.path.join(out, f"h_t{i}.csv"), table_text(head + ["value"], cols + [H[i]]))
        tc = [np.broadcast_to(c[..., 0], grid.tshape) for c in grid.coords()[:-1]]
        atomic_write_text(os.path.join(out, f"front_t{i}.csv"),
                          table_text(head[:-1] + ["rho"], tc + [np.broadcast_to(rho.values[i], grid.tshape)]))
    atomic_write_text(os.path.join(out, "report.txt"), _report(cfg, data, state, diag, norm, status))
    t3 = time.perf_counter()
    atomic_write_text(os.path.join(out, "timings.txt"),
                      f"setup = {t1 - t0:.3f}\nsolve = {t2 - t1:.3f}\noutput = {t3 - t2:.3f}\n")
    print(f"{status}: {state.iterate_index} iterations, residual {state.residual_norm:.3e}, output in {out}")
    return EXIT_OK if state.converged and status == "ok" else EXIT_SOLVER


# ---------------------------------------------------------------- model

def _parse_rhs(spec, x):
    from .config import read_table

    kind, _, arg = spec.partition(":")
    if kind == "const":
        return np.full(x.size, complex(arg))
    if kind == "cos":
        return np.cos(float(arg) * x).astype(complex)
    if kind == "csv":
        _, body = read_table(arg)
        if body.ndim != 2 or body.shape[0] != x.size:
            raise ConfigError(f"{arg}: expected {x.size} rows")
        return body[:, -1].astype(complex)
    raise ConfigError("rhs must be const:<v>, cos:<k> or csv:<path>")


def cmd_model(args) -> int:
    from .mesh import make_graded_mesh
    from .model import ModeProblem, energy_identity_residual, mode_ode_solve

    try:
        M, q = args.mesh.split(",")
        mesh = make_graded_mesh(int(M), float(q))
        p, a_top = complex(args.p), complex(args.a_top)
    except ValueError as exc:
        raise ConfigError(f"bad numeric argument: {exc}") from exc
    bc = {"neumann": "neumann0", "dirichlet": "dirichlet0"}[args.bc]
    top = {"robin": "robin_top", "simply_supported": "simply_supported_top", None: None}[args.top]
    top = top or ("robin_top" if bc == "neumann0" else "simply_supported_top")
    x = mesh.nodes
    rhs = _parse_rhs(args.rhs, x)
    try:
        prob = ModeProblem(args.k2, p, rhs, bc, top, a_top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sol = mode_ode_solve(prob, mesh)
    res = energy_identity_residual(sol, args.k2, p, rhs, args.bc, a_top)
    cols, head = [x], ["x_N"]
    for name, arr in (("v", sol.v), ("dv", sol.dv), ("d2v", sol.d2v), ("w3", sol.w3)):
        cols += [np.real(arr), np.imag(arr)]
        head += [f"re_{name}", f"im_{name}"]
    text = table_text(head, cols)
    if args.output:
        atomic_write_text(args.output, text)
    else:
        sys.stdout.write(text)
    print(f"energy_residual = {res:.6e}")
    return EXIT_OK


# ---------------------------------------------------------------- norms

def cmd_norms(args) -> int:
    from .holder import PairPlan, WeightFunction, c4gamma_norm
    from .mesh import read_field_csv

    try:
        fld = read_field_csv(args.input)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{args.input}: {exc}") from exc
    weight = WeightFunction("wall_normal" if args.weight == "wall" else "disk")
    rep = c4gamma_norm(fld, args.gamma, weight, PairPlan(args.pairs, args.seed))
    sys.stdout.write(rep.to_text())
    return EXIT_OK


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    from .suites import CHECKS, GROUPS

    ok = True
    for i in GROUPS[args.group]:
        r = CHECKS[i]()
        print(r.line(), flush=True)
        ok &= r.passed
    return EXIT_OK if ok else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfsolve", description="Thin-film contact-line solver")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve the free boundary problem from a config file")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("model", help="solve one Fourier mode of the model problem")
    m.add_argument("--bc", choices=("neumann", "dirichlet"), default="neumann")
    m.add_argument("--top", choices=("robin", "simply_supported"))
    m.add_argument("--k2", type=float, default=0.0)
    m.add_argument("--p", default="0")
    m.add_argument("--a-top", default="0")
    m.add_argument("--rhs", default="const:1")
    m.add_argument("--mesh", default="128,2")
    m.add_argument("--output")
    m.set_defaults(func=cmd_model)

    n = sub.add_parser("norms", help="weighted Holder norms of a field dump")
    n.add_argument("--input", required=True)
    n.add_argument("--gamma", type=float, default=0.5)
    n.add_argument("--weight", choices=("wall", "disk"), default="wall")
    n.add_argument("--pairs", type=int, default=100_000)
    n.add_argument("--seed", type=int, default=0)
    n.set_defaults(func=cmd_norms)

    v = sub.add_parser("verify", help="run acceptance checks")
    v.add_argument("group", nargs="?", default="all", choices=("identities", "oracles", "mms", "interp", "all"))
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ThinFilmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
