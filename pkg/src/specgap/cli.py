"""Command-line front end: ``specgap <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 bound violations (``validate`` only).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import bounds as B
from .csvio import write_csv
from .errors import InvalidArgument, SpecgapError
from .galerkin import BasisSpec, hermite_ladder_check
from .model import ModelParams, Potential, model_constants
from .spectral import SWEEP_HEADER, Protocol, converged_gap, default_jobs, sweep
from .steady import fisher_information, identity_residuals, kinetic_moment, mean_velocity, steady_state

log = logging.getLogger("specgap")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VIOLATION = 0, 2, 3, 4
COMMANDS = ("gap", "sweep", "steady", "bounds", "validate", "selfcheck")

STEADY_HEADER = ("xi", "tau", "U0", "K", "v_tau", "kinetic_moment", "velocity_residual",
                 "energy_residual", "fisher", "fisher_available")

DEFAULTS = {
    "U0": [1.0], "xi": None, "xi_log": None, "tau": [0.0], "m": 1.0, "beta": 1.0,
    "K_start": 4, "K_max": 20, "rel_tol": 1e-3, "K": 16, "scheme": "dms",
    "jobs": None, "output": None, "potential": None,
}


class ConfigError(InvalidArgument):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def log_range(spec: str) -> list[float]:
    """``a:b:n`` -> n log-spaced values from a to b (inclusive)."""
    try:
        a, b, n = str(spec).split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise InvalidArgument(f"log range must look like a:b:n, got {spec!r}") from None
    if not (a > 0 and b > 0 and n >= 1):
        raise InvalidArgument("log range needs a, b > 0 and n >= 1")
    if n == 1:
        return [a]
    return [float(x) for x in np.logspace(math.log10(a), math.log10(b), n)]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specgap", description="Spectral gap of nonequilibrium Langevin dynamics on the circle.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    helps = {
        "gap": "converged spectral gap at each (U0, xi, tau)",
        "sweep": "gap table over a (xi, tau) grid",
        "steady": "steady-state observables and identity residuals",
        "bounds": "optimized hypocoercive lower bounds",
        "validate": "check bounds against computed gaps",
        "selfcheck": "ladder, Lambda_- and flat-potential checks",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", help="JSON or YAML file with default options")
        s.add_argument("-o", "--output", help="CSV output path (default: stdout)")
        if name == "selfcheck":
            continue
        s.add_argument("--U0", type=_float_list, help="cosine amplitude(s), comma separated")
        s.add_argument("--xi", type=_float_list, help="friction value(s), comma separated")
        s.add_argument("--xi-log", dest="xi_log", help="log-spaced friction grid a:b:n")
        s.add_argument("--tau", type=_float_list, help="forcing value(s), comma separated")
        s.add_argument("--m", type=float)
        s.add_argument("--beta", type=float)
        s.add_argument("--Kstart", dest="K_start", type=int)
        s.add_argument("--Kmax", dest="K_max", type=int)
        s.add_argument("--rel-tol", dest="rel_tol", type=float)
        s.add_argument("--jobs", type=int, help="worker processes (default $SPECGAP_JOBS or cores)")
        if name == "steady":
            s.add_argument("--K", type=int, help="Fourier cutoff; N = 2K Hermite levels")
        if name in ("bounds", "validate"):
            s.add_argument("--scheme", choices=("h1", "dms", "both"))
    return p


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    aliases = {"Kstart": "K_start", "Kmax": "K_max"}
    data = {aliases.get(k, k): v for k, v in data.items()}
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("U0", "xi", "tau"):
        if key in data and data[key] is not None and not isinstance(data[key], list):
            data[key] = [data[key]]
    return data


@dataclass
class RunConfig:
    """Fully resolved options for one invocation."""

    command: str
    U0: list[float]
    xi: list[float]
    tau: list[float]
    m: float
    beta: float
    K_start: int
    K_max: int
    rel_tol: float
    K: int
    scheme: str
    jobs: int
    output: str | None
    potential: dict | None = None
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("command", "U0", "xi", "tau", "m", "beta",
                                           "K_start", "K_max", "rel_tol")}
        if self.command == "steady":
            d["K"] = self.K
        if self.command in ("bounds", "validate"):
            d["scheme"] = self.scheme
        if self.potential is not None:
            d["potential"] = self.potential
        return d

    @property
    def protocol(self) -> Protocol:
        return Protocol(self.K_start, self.K_max, self.rel_tol)

    def potentials(self) -> list[tuple[float, Potential]]:
        if self.potential is not None:
            return [(math.nan, _fourier_potential(self.potential))]
        return [(u, Potential.cosine(u)) for u in self.U0]

    def base(self, pot: Potential) -> ModelParams:
        return ModelParams(m=self.m, beta=self.beta, potential=pot)


def _fourier_potential(spec) -> Potential:
    try:
        if spec.get("kind", "fourier") != "fourier":
            raise ConfigError("config potential must have kind 'fourier'")
        return Potential.from_table(spec["coeffs"])
    except (AttributeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed potential table: {exc}") from exc


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file and flags (flags win) and validate."""
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(_load_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            opts[key] = v
    if getattr(args, "xi", None) is not None:
        opts["xi_log"] = None
    elif getattr(args, "xi_log", None) is not None:
        opts["xi"] = None
    if opts["xi_log"] is not None:
        opts["xi"] = log_range(opts["xi_log"])
    if opts["xi"] is None:
        opts["xi"] = [1.0]
    try:
        cfg = RunConfig(
            command=args.command,
            U0=[float(x) for x in opts["U0"]], xi=[float(x) for x in opts["xi"]],
            tau=[float(x) for x in opts["tau"]], m=float(opts["m"]), beta=float(opts["beta"]),
            K_start=int(opts["K_start"]), K_max=int(opts["K_max"]), rel_tol=float(opts["rel_tol"]),
            K=int(opts["K"]), scheme=str(opts["scheme"]),
            jobs=int(opts["jobs"]) if opts["jobs"] is not None else default_jobs(),
            output=opts["output"], potential=opts["potential"],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad option value: {exc}") from exc
    if not cfg.U0 or not cfg.xi or not cfg.tau:
        raise ConfigError("parameter grids must be non-empty")
    if any(not (x > 0 and math.isfinite(x)) for x in cfg.xi):
        raise ConfigError("xi values must be positive")
    if any(not math.isfinite(x) for x in cfg.tau + cfg.U0):
        raise ConfigError("tau and U0 values must be finite")
    if not (cfg.m > 0 and cfg.beta > 0):
        raise ConfigError("m and beta must be positive")
    if cfg.K_start < 4 or cfg.K_max < cfg.K_start:
        raise ConfigError("need 4 <= Kstart <= Kmax")
    if not cfg.rel_tol > 0:
        raise ConfigError("rel-tol must be positive")
    if cfg.K < 1:
        raise ConfigError("K must be positive")
    if cfg.scheme not in ("h1", "dms", "both"):
        raise ConfigError(f"unknown scheme {cfg.scheme!r}")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return cfg


@contextlib.contextmanager
def _open_output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc
    with fh:
        yield fh


def _summary(msg: str, cfg: RunConfig):
    # keep stdout clean for CSV when no output file is given
    stream = sys.stderr if cfg.output in (None, "-") and cfg.command != "gap" else sys.stdout
    print(msg, file=stream)


# -- subcommands -----------------------------------------------------------------

def _sweep_rows(cfg: RunConfig):
    rows = []
    for _, pot in cfg.potentials():
        rows.extend(sweep(cfg.xi, cfg.tau, cfg.base(pot), cfg.protocol, jobs=cfg.jobs))
    for r in rows:
        if r.error:
            log.error("xi=%g tau=%g: %s", r.xi, r.tau, r.error)
    return rows


def cmd_gap(cfg: RunConfig) -> int:
    rows = _sweep_rows(cfg)
    for r in rows:
        flag = "" if r.converged else "  (not converged)"
        print(f"gap {r.gap:.10g}  xi={r.xi:g} tau={r.tau:g} U0={r.U0:g} K={r.K}{flag}")
    if cfg.output:
        with _open_output(cfg.output) as fh:
            write_csv(fh, SWEEP_HEADER, [r.cells() for r in rows], cfg.as_dict())
    return EXIT_NUMERIC if any(r.error for r in rows) else EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    rows = _sweep_rows(cfg)
    with _open_output(cfg.output) as fh:
        write_csv(fh, SWEEP_HEADER, [r.cells() for r in rows], cfg.as_dict())
    n_conv = sum(r.converged for r in rows)
    _summary(f"sweep: {len(rows)} rows, {n_conv} converged, {time.perf_counter() - t0:.1f} s", cfg)
    return EXIT_NUMERIC if any(r.error for r in rows) else EXIT_OK


def cmd_steady(cfg: RunConfig) -> int:
    basis = BasisSpec.square(cfg.K)
    out = []
    for U0, pot in cfg.potentials():
        base = cfg.base(pot)
        for xi in cfg.xi:
            for tau in cfg.tau:
                p = base.replace(xi=xi, tau=tau)
                c = model_constants(p, cfg.K)
                ss = steady_state(p, basis, c)
                vr, er = identity_residuals(ss, c)
                fi = fisher_information(ss, c)
                out.append([xi, tau, U0, cfg.K, mean_velocity(ss, c), kinetic_moment(ss, c),
                            vr, er, math.nan if fi is None else fi, fi is not None])
    with _open_output(cfg.output) as fh:
        write_csv(fh, STEADY_HEADER, out, cfg.as_dict())
    _summary(f"steady: {len(out)} states at K={cfg.K}", cfg)
    return EXIT_OK


def _schemes(cfg: RunConfig) -> tuple[str, ...]:
    return B.SCHEMES if cfg.scheme == "both" else (cfg.scheme,)


def _bound_rows(cfg: RunConfig):
    reports = []
    for _, pot in cfg.potentials():
        base = cfg.base(pot)
        pc = B.poincare_constants(base)
        lham = B.norm_LhamAstar(base)
        log.info("k_nu=%.12g k_kappa=%.12g |L_ham A*|=%.12g (raw %.12g)",
                 pc.k_nu, pc.k_kappa, lham.value, lham.raw_2K)
        rows = sweep(cfg.xi, cfg.tau, base, cfg.protocol, jobs=cfg.jobs)
        for scheme in _schemes(cfg):
            reports.append(B.validate_bounds(rows, scheme, base, pc, lham))
    return reports


def cmd_bounds(cfg: RunConfig) -> int:
    reports = _bound_rows(cfg)
    rows = [r for rep in reports for r in rep.rows]
    with _open_output(cfg.output) as fh:
        write_csv(fh, B.BOUNDS_HEADER, [r.cells() for r in rows], cfg.as_dict())
    feas = sum(r.feasible for r in rows)
    _summary(f"bounds: {len(rows)} rows, {feas} feasible", cfg)
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    reports = _bound_rows(cfg)
    rows = [r for rep in reports for r in rep.rows]
    with _open_output(cfg.output) as fh:
        write_csv(fh, B.BOUNDS_HEADER, [r.cells() for r in rows], cfg.as_dict())
    bad = sum(rep.violations for rep in reports)
    checked = sum(rep.checked for rep in reports)
    _summary(f"validate: {checked} rows checked, {bad} violations", cfg)
    return EXIT_VIOLATION if bad else EXIT_OK


def selfcheck_results(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run the cheap internal consistency checks; returns (name, ok, detail)."""
    results = []
    worst = 0.0
    for m, beta in ((1.0, 1.0), (2.0, 0.5)):
        rep = hermite_ladder_check(BasisSpec(N=12, K=3), m, beta)
        worst = max(worst, rep.max_residual)
    results.append(("hermite ladder", worst <= 1e-8, f"max residual {worst:.2e}"))

    rng = np.random.default_rng(seed)
    a, c = rng.normal(size=(2, 1000))
    b = rng.normal(size=1000)
    mine = B.lambda_min_2x2(a, b, c)
    ref = np.array([np.linalg.eigvalsh([[x, y / 2], [y / 2, z]])[0] for x, y, z in zip(a, b, c)])
    err = float(np.max(np.abs(mine - ref)))
    results.append(("Lambda_- formula", err <= 1e-12, f"max error {err:.2e}"))

    worst = 0.0
    for xi in (0.2, 0.5, 1.0, 2.0, 5.0):
        tr = converged_gap(ModelParams(xi=xi), K_start=4, K_max=12)
        exact = B.kozlov_gap(xi)
        worst = max(worst, abs(tr.final_gap - exact) / exact if tr.converged else math.inf)
    results.append(("flat-potential gaps", worst <= 1e-3, f"max rel error {worst:.2e}"))
    return results


def cmd_selfcheck(cfg: RunConfig) -> int:
    results = selfcheck_results()
    rows = [[name, ok, detail] for name, ok, detail in results]
    if cfg.output:
        with _open_output(cfg.output) as fh:
            write_csv(fh, ("check", "ok", "detail"), rows, {"command": "selfcheck"})
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


HANDLERS = {"gap": cmd_gap, "sweep": cmd_sweep, "steady": cmd_steady,
            "bounds": cmd_bounds, "validate": cmd_validate, "selfcheck": cmd_selfcheck}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "selfcheck":
            cfg = RunConfig("selfcheck", [0.0], [1.0], [0.0], 1.0, 1.0, 4, 12, 1e-3, 16,
                            "dms", 1, args.output)
        else:
            cfg = resolve(args)
        return HANDLERS[args.command](cfg)
    except InvalidArgument as exc:
        print(f"specgap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpecgapError as exc:
        print(f"specgap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
