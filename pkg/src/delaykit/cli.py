"""``delaykit`` command line: read a JSON problem, run a solver, write a table.

    delaykit fundsol --config problem.json --format csv
    delaykit ivp --config problem.json --step 0.005 --out u.csv
    delaykit heat --config heat.json --modes 32 --format json
    delaykit verify

Exit codes: 0 success, 1 configuration error, 2 numeric error,
3 verification failure.
"""
import argparse
import csv
from dataclasses import dataclass, field
import io
import json
import math
import sys
import time

import numpy as np

from .errors import DelayKitError, InvalidArgumentError
from .expr import Expression, ExpressionError
from .fundsol import FundamentalSolution, Method, TruncationPolicy
from .heatdelay import HeatProblem, SpectralConfig, solve_spectral
from .ivpsolver import DelaySystem, solve_method_of_steps, solve_nonhomogeneous
from .matcore import opnorm

__all__ = ["ConfigError", "ProblemConfig", "ResultTable", "parse_config", "run", "emit", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

KINDS = ("fundsol", "ivp", "heat", "verify")
METHODS = ("auto",) + tuple(m.value for m in Method)

_COMMON = {"kind", "tau", "grid", "tol", "quad_points", "quad_tol"}
ALLOWED = {
    "fundsol": _COMMON | {"A0", "A1", "method"},
    "ivp": _COMMON | {"A0", "A1", "method", "phi", "dphi", "g", "h", "route", "oracle"},
    "heat": _COMMON | {"a", "b", "phi", "psi", "dphi_dt", "n_modes", "quad_points_x", "route"},
    "verify": {"kind"},
}
GRID_KEYS = {"t_start", "t_end", "n_points", "x_points"}
DEFAULTS = {"tol": 1e-8, "quad_points": 16, "quad_tol": 1e-10, "n_modes": 64, "quad_points_x": 128}


class ConfigError(InvalidArgumentError):
    """Invalid configuration; the message starts with the offending key path."""

    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass
class ProblemConfig:
    kind: str
    raw: dict
    tau: float = 1.0
    ts: np.ndarray = None
    xs: np.ndarray = None
    tol: float = 1e-8
    quad_points: int = 16
    quad_tol: float = 1e-10
    method: str = "auto"
    system: DelaySystem = None
    heat: HeatProblem = None
    n_modes: int = 64
    quad_points_x: int = 128
    h: float = None
    route: str = "continuous"
    oracle: bool = False


@dataclass
class ResultTable:
    """Rectangular table; cells are finite floats or, for labels, strings."""

    columns: list
    rows: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = [str(c) for c in self.columns]
        rows = []
        for i, row in enumerate(self.rows):
            row = list(row)
            if len(row) != len(self.columns):
                raise InvalidArgumentError(f"row {i} has {len(row)} cells, expected {len(self.columns)}")
            cells = []
            for c in row:
                if isinstance(c, str):
                    cells.append(c)
                    continue
                c = float(c)
                if not math.isfinite(c):
                    raise InvalidArgumentError(f"row {i} contains a non-finite value")
                cells.append(c)
            rows.append(cells)
        self.rows = rows


# --- parsing --------------------------------------------------------------------


def _number(cfg, key, path, default=None, positive=False, integer=False):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"{path}{key}", "required key missing")
        return default
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path}{key}", f"expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}{key}", f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}{key}", f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _matrix(cfg, key):
    if key not in cfg:
        raise ConfigError(key, "required key missing")
    raw = cfg[key]
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        raw = [[raw]]
    try:
        M = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(key, "expected a square nested list of numbers") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ConfigError(key, f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ConfigError(key, "entries must be finite")
    return M


def _pair(cfg):
    A0, A1 = _matrix(cfg, "A0"), _matrix(cfg, "A1")
    if A0.shape != A1.shape:
        raise ConfigError("A0/A1", f"dimension mismatch: A0 is {A0.shape[0]}x{A0.shape[1]} but A1 is {A1.shape[0]}x{A1.shape[1]}")
    return A0, A1


def _expr(src, path, variables):
    try:
        return Expression(src, variables)
    except ExpressionError as exc:
        raise ConfigError(path, str(exc)) from None


def _vector_field(cfg, key, d, required):
    """Expressions in t, one per component, as a vectorized ``(m,) -> (m, d)`` callable."""
    if key not in cfg:
        if required:
            raise ConfigError(key, "required key missing")
        return None
    raw = cfg[key]
    parts = [raw] if isinstance(raw, str) else raw
    if not isinstance(parts, list) or len(parts) != d:
        raise ConfigError(key, f"expected {d} expression(s) to match the system dimension")
    exprs = [_expr(p, f"{key}[{i}]" if not isinstance(raw, str) else key, ("t",)) for i, p in enumerate(parts)]

    def fn(ts):
        return np.stack([e(t=ts) for e in exprs], axis=-1)

    return fn


def _grid(cfg, tau, want_x):
    g = cfg.get("grid", {})
    if not isinstance(g, dict):
        raise ConfigError("grid", "expected an object")
    for k in g:
        if k not in GRID_KEYS or (k == "x_points" and not want_x):
            raise ConfigError(f"grid.{k}", "unknown key")
    t0 = _number(g, "t_start", "grid.", 0.0)
    t1 = _number(g, "t_end", "grid.", 3.0 * tau)
    n = _number(g, "n_points", "grid.", 31, positive=True, integer=True)
    if t1 < t0:
        raise ConfigError("grid.t_end", "must be >= grid.t_start")
    ts = np.linspace(t0, t1, n)
    xs = None
    if want_x:
        nx = _number(g, "x_points", "grid.", 65, positive=True, integer=True)
        xs = np.linspace(0.0, np.pi, nx)
    return ts, xs


def _choice(cfg, key, options, default):
    v = cfg.get(key, default)
    if v not in options:
        raise ConfigError(key, f"expected one of {', '.join(options)}, got {v!r}")
    return v


def parse_config(source, kind=None, overrides=None):
    """Validate a configuration.

    `source` is a path, ``"-"`` for stdin, a file-like object, or an already
    decoded dict.  `kind` (from the subcommand) fills in or must match the
    ``kind`` key.  `overrides` maps ``tol``, ``n_modes`` and ``h`` to values
    from command-line flags; ``None`` entries are ignored.
    """
    if isinstance(source, dict):
        cfg = dict(source)
    else:
        try:
            if source == "-" or source is None:
                text = sys.stdin.read()
            elif hasattr(source, "read"):
                text = source.read()
            else:
                with open(source, encoding="utf-8") as fh:
                    text = fh.read()
            cfg = json.loads(text)
        except OSError as exc:
            raise ConfigError("config", f"cannot read: {exc}") from None
        except UnicodeDecodeError:
            raise ConfigError("config", "not valid UTF-8") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a JSON object")

    if kind is not None:
        if cfg.setdefault("kind", kind) != kind:
            raise ConfigError("kind", f"config says {cfg['kind']!r} but the subcommand is {kind!r}")
    k = cfg.get("kind")
    if k not in KINDS:
        raise ConfigError("kind", f"expected one of {', '.join(KINDS)}, got {k!r}")
    for key in cfg:
        if key not in ALLOWED[k]:
            raise ConfigError(key, f"unknown key for kind {k!r}")
    for key, value in (overrides or {}).items():
        if value is not None:
            if key not in ALLOWED[k]:
                raise ConfigError(key, f"option does not apply to kind {k!r}")
            cfg[key] = value

    pc = ProblemConfig(kind=k, raw=cfg)
    if k == "verify":
        return pc

    pc.tau = _number(cfg, "tau", "", positive=True)
    pc.tol = _number(cfg, "tol", "", DEFAULTS["tol"], positive=True)
    pc.quad_points = _number(cfg, "quad_points", "", DEFAULTS["quad_points"], positive=True, integer=True)
    pc.quad_tol = _number(cfg, "quad_tol", "", DEFAULTS["quad_tol"], positive=True)
    pc.ts, pc.xs = _grid(cfg, pc.tau, want_x=(k == "heat"))

    if k in ("fundsol", "ivp"):
        A0, A1 = _pair(cfg)
        pc.method = _choice(cfg, "method", METHODS, "auto")
        pc.raw = dict(cfg, A0=A0.tolist(), A1=A1.tolist())
        if k == "fundsol":
            pc.system = (A0, A1)
            return pc
        d = A0.shape[0]
        pc.h = _number(cfg, "h", "", pc.tau / 200, positive=True)
        pc.route = _choice(cfg, "route", ("continuous", "differentiable"), "continuous")
        oracle = cfg.get("oracle", False)
        if not isinstance(oracle, bool):
            raise ConfigError("oracle", "expected true or false")
        pc.oracle = oracle
        if pc.ts.size and pc.ts[0] < 0:
            raise ConfigError("grid.t_start", "must be >= 0 for kind 'ivp'")
        phi = _vector_field(cfg, "phi", d, required=True)
        dphi = _vector_field(cfg, "dphi", d, required=pc.route == "differentiable")
        g = _vector_field(cfg, "g", d, required=False)
        try:
            pc.system = DelaySystem(A0, A1, pc.tau, phi=phi, dphi=dphi, g=g, vectorized=True)
        except InvalidArgumentError as exc:
            raise ConfigError("phi", str(exc)) from None
        return pc

    # heat
    pc.n_modes = _number(cfg, "n_modes", "", DEFAULTS["n_modes"], positive=True, integer=True)
    pc.quad_points_x = _number(cfg, "quad_points_x", "", DEFAULTS["quad_points_x"], positive=True, integer=True)
    pc.route = _choice(cfg, "route", ("continuous", "differentiable"), "continuous")
    if pc.ts.size and pc.ts[0] < 0:
        raise ConfigError("grid.t_start", "must be >= 0 for kind 'heat'")
    fields = {}
    for key, required in (("phi", True), ("psi", False), ("dphi_dt", pc.route == "differentiable")):
        if key in cfg:
            e = _expr(cfg[key], key, ("x", "t"))
            fields[key] = (lambda e: lambda x, t: e(x=x, t=t))(e)
        elif required:
            raise ConfigError(key, "required key missing")
    try:
        pc.heat = HeatProblem(
            _number(cfg, "a", "", 1.0), _number(cfg, "b", "", 0.0), pc.tau,
            fields["phi"], fields.get("psi"), fields.get("dphi_dt"),
        )
    except InvalidArgumentError as exc:
        raise ConfigError("phi", str(exc)) from None
    return pc


# --- running --------------------------------------------------------------------


def _fundamental(pc):
    A0, A1 = pc.system
    trunc = TruncationPolicy(tol=pc.tol, quad_points=pc.quad_points)
    if pc.method == "auto":
        return FundamentalSolution.auto(A0, A1, pc.tau, trunc)
    return FundamentalSolution(A0, A1, pc.tau, Method(pc.method), trunc)


def _run_fundsol(pc):
    S = _fundamental(pc)
    d = S.dim
    ts = pc.ts
    full = S(ts)
    half = S(ts / 2)
    gap = np.array([opnorm(h @ h - f) for h, f in zip(half, full)])
    cols = ["t"] + [f"S_{i + 1}{j + 1}" for i in range(d) for j in range(d)] + ["semigroup_gap"]
    rows = np.column_stack([ts, full.reshape(ts.size, d * d), gap])
    meta = {"kind": "fundsol", "method": S.method.value, "tol": pc.tol, "tau": pc.tau,
            "semigroup_gap": "operator 2-norm of S(t/2)^2 - S(t)"}
    return ResultTable(cols, rows.tolist(), meta)


def _run_ivp(pc):
    sys_ = pc.system
    d = sys_.dim
    method = None if pc.method == "auto" else Method(pc.method)
    trunc = TruncationPolicy(tol=pc.tol, quad_points=pc.quad_points)
    sol = solve_nonhomogeneous(sys_, pc.ts, trunc=trunc, quad_tol=pc.quad_tol, method=method, history_route=pc.route)
    cols = ["t"] + [f"u_{i + 1}" for i in range(d)]
    blocks = [pc.ts[:, None], sol.values]
    meta = {"kind": "ivp", "method": sol.meta["fundamental"], "route": pc.route, "tol": pc.tol,
            "quad_tol": pc.quad_tol, "tau": pc.tau}
    if pc.oracle:
        # one oracle run per requested time so every row sits on a step node
        steps = np.array([solve_method_of_steps(sys_, t, pc.h).values[-1] for t in pc.ts]).reshape(pc.ts.size, d)
        cols += [f"u_{i + 1}_steps" for i in range(d)]
        blocks.append(steps)
        meta["step"] = pc.h
    return ResultTable(cols, np.hstack(blocks).tolist(), meta)


def _run_heat(pc):
    cfg = SpectralConfig(n_modes=pc.n_modes, quad_points_x=pc.quad_points_x, quad_tol=pc.quad_tol)
    grid = solve_spectral(pc.heat, cfg, pc.xs, pc.ts, route=pc.route, trunc=TruncationPolicy(tol=pc.tol))
    T, X = np.meshgrid(grid.ts, grid.xs, indexing="ij")
    rows = np.column_stack([T.ravel(), X.ravel(), grid.values.ravel()])
    meta = {"kind": "heat", "method": "spectral", "n_modes": pc.n_modes, "route": pc.route,
            "quad_tol": pc.quad_tol, "coefficient_tail": grid.meta["coefficient_tail"]}
    return ResultTable(["t", "x", "u"], rows.tolist(), meta)


def _run_verify(pc):
    from .verify import run_suite

    results = run_suite()
    rows = [[r.name, r.value, r.threshold, 1.0 if r.passed else 0.0] for r in results]
    meta = {"kind": "verify", "checks": len(rows), "failed": sum(not r.passed for r in results)}
    return ResultTable(["check", "value", "threshold", "passed"], rows, meta)


def run(pc):
    """Dispatch a parsed configuration; returns a :class:`ResultTable`.

    Output depends only on the configuration.  Wall time is recorded in
    ``meta["wall_time_s"]``, which only the JSON format prints.
    """
    start = time.perf_counter()
    table = {"fundsol": _run_fundsol, "ivp": _run_ivp, "heat": _run_heat, "verify": _run_verify}[pc.kind](pc)
    table.meta["wall_time_s"] = time.perf_counter() - start
    return table


# --- output ---------------------------------------------------------------------


def _fmt(v):
    return v if isinstance(v, str) else format(v, ".17g")


def emit(table, fmt="csv", path=None):
    """Write `table` as CSV or JSON to `path` (stdout when ``None`` or ``"-"``)."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps({"meta": table.meta, "columns": table.columns, "rows": table.rows}) + "\n"
    else:
        raise InvalidArgumentError(f"unknown format {fmt!r}")
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError("--out", f"cannot write {path}: {exc}") from None


def build_parser():
    ap = argparse.ArgumentParser(prog="delaykit", description="Linear delay equations via fundamental solutions.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("fundsol", "tabulate the fundamental solution S(t)"),
        ("ivp", "solve a delay initial value problem"),
        ("heat", "solve the delayed heat equation by sine series"),
        ("verify", "run the invariant suite"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON problem file ('-' for stdin)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--tol", type=float, help="series truncation tolerance")
        p.add_argument("--modes", type=int, help="number of sine modes (heat)")
        p.add_argument("--step", type=float, help="method-of-steps step size (ivp oracle)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"tol": args.tol, "n_modes": args.modes, "h": args.step}
    try:
        if args.command == "verify" and args.config is None:
            pc = parse_config({"kind": "verify"})
        else:
            pc = parse_config(args.config if args.config is not None else "-", kind=args.command, overrides=overrides)
        table = run(pc)
        emit(table, args.format, args.out)
    except ConfigError as exc:
        print(f"delaykit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DelayKitError as exc:
        print(f"delaykit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if pc.kind == "verify" and table.meta["failed"]:
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
