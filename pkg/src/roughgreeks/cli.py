"""Command-line experiment runner.

Every subcommand reads a flat ``key = value`` config (``--config``) with
command-line flags taking precedence, and writes CSV or JSON whose header
records the package version, seed and config hash.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 validation failure.
"""
from __future__ import annotations

import argparse
import io
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .drift import CapabilityError
from .greeks import (
    Payoff,
    RegimeWarning,
    bel_delta_sde,
    bel_greeks_model,
    fd_delta_sde,
    fd_greeks,
)
from .kernel import covariance_R, kernel_dK_dt, kernel_K
from .model import simulate_model
from .noise import Correlated, FactorizationError, sample_bundle
from .sde import euler_solve, first_variation_exp, first_variation_localtime
from .stability import StabilityScan, stability_scan

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3
OUTPUT_DIR_ENV = "ROUGHGREEKS_OUTPUT_DIR"

# flag name -> config key, for flags shared by the subcommands
_COMMON = {
    "seed": int, "H": float, "T": float, "N": int, "paths": int, "threads": int,
}
_SPECIFIC = {
    "sample-paths": {"mix": str, "rho": float, "rho1": float, "rho2": float},
    "solve": {"drift": str, "x0": float, "lam": float, "mollify_n": int, "drift_sign": str, "mix": str,
              "rho1": float, "rho2": float, "a1": float, "a2": float, "b1": float, "b2": float, "R": float},
    "simulate-model": {"preset": str, "rho": float, "mu": float, "nu": float, "x1": float, "x2": float,
                       "mollify_n": int},
    "greeks": {"model": str, "estimator": str, "rho": float, "payoff": str, "preset": str, "drift": str,
               "x0": float, "x1": float, "x2": float, "lam": float, "mollify_n": int, "fd_h": float},
    "stability": {"p": int, "gaps": str, "drift": str, "x0": float, "mix": str, "drift_sign": str,
                  "rho1": float, "rho2": float},
    "kernel-table": {},
    "validate": {"suite": str},
}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Table:
    """Rows plus reproducibility metadata, rendered as CSV or JSON."""

    def __init__(self, command, cfg: RunConfig, columns, rows, summary=None):
        self.command = command
        self.cfg = cfg
        self.columns = list(columns)
        self.rows = rows
        self.summary = summary or {}

    def header(self):
        return {"command": self.command, "version": __version__, "seed": self.cfg.seed,
                "config_hash": self.cfg.config_hash}

    def render(self, fmt: str) -> str:
        if fmt == "json":
            doc = dict(self.header())
            doc["columns"] = self.columns
            doc["rows"] = [[float(v) if isinstance(v, (float, np.floating)) else v for v in r] for r in self.rows]
            doc["summary"] = self.summary
            return json.dumps(doc, sort_keys=True, indent=1) + "\n"
        buf = io.StringIO()
        for k, v in self.header().items():
            buf.write(f"# {k}={v}\n")
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(v) for v in r) + "\n")
        for k, v in self.summary.items():
            buf.write(f"# {k}={_fmt(v)}\n")
        return buf.getvalue()


def _path_rows(t, arrays):
    rows = []
    for p in range(arrays[0].shape[0]):
        for i in range(t.size):
            rows.append([p, t[i]] + [a[p, i] for a in arrays])
    return rows


def cmd_kernel_table(cfg: RunConfig) -> Table:
    t = cfg.grid.nodes
    rows = []
    for i in range(1, t.size):
        s = t[1:i]
        if s.size == 0:
            continue
        Kv = kernel_K(cfg.H, t[i], s)
        dK = kernel_dK_dt(cfg.H, t[i], s)
        R = covariance_R(cfg.H, t[i], s)
        rows.extend([t[i], s[j], Kv[j], dK[j], R[j]] for j in range(s.size))
    return Table("kernel-table", cfg, ["t", "s", "K", "dK_dt", "R"], rows)


def cmd_sample_paths(cfg: RunConfig) -> Table:
    b = sample_bundle(cfg.grid, cfg.H, cfg.mix_spec(), cfg.seed, cfg.paths)
    mixed = b.mixed if b.mixed is not None else b.BH
    return Table("sample-paths", cfg, ["path", "t", "B", "BH", "W", "mixed"],
                 _path_rows(cfg.grid.nodes, [b.B, b.BH, b.W, mixed]))


def cmd_solve(cfg: RunConfig) -> Table:
    drift = cfg.sde_drift()
    b = sample_bundle(cfg.grid, cfg.H, cfg.mix_spec(), cfg.seed, cfg.paths)
    path = euler_solve(drift, b, cfg.x0, sign=cfg.sde_sign)
    if drift.has_derivative:
        J = first_variation_exp(drift, path)
    elif cfg.mix == "scaled" and cfg.rho2 != 0:
        J = first_variation_localtime(drift, b, path, cfg.rho1, cfg.rho2)
    else:
        raise CapabilityError("no first-variation route: mollify the drift or use mix=scaled with rho2 != 0")
    return Table("solve", cfg, ["path", "t", "X", "J"], _path_rows(cfg.grid.nodes, [path.X, J]))


def cmd_simulate_model(cfg: RunConfig) -> Table:
    prm = cfg.stock_params()
    b = sample_bundle(cfg.grid, cfg.H, Correlated(prm.rho), cfg.seed, cfg.paths)
    m = simulate_model(prm, b, cfg.x1, cfg.x2)
    return Table("simulate-model", cfg, ["path", "t", "S", "sigma", "dS_dx1", "dS_dx2", "dsigma_dx2"],
                 _path_rows(cfg.grid.nodes, [m.S, m.sigma, m.dS_dx1, m.dS_dx2, m.dsigma_dx2]),
                 {"truncation_hits": m.truncation_hits})


def cmd_greeks(cfg: RunConfig) -> Table:
    payoff = Payoff.parse(cfg.payoff)
    h = cfg.fd_h or None
    kw = dict(n_paths=cfg.paths, seed=cfg.seed, grid=cfg.grid, threads=cfg.threads)
    runs = []
    if cfg.model == "sde":
        drift = cfg.sde_drift()
        if cfg.estimator in ("bel", "both"):
            runs.append(lambda: (bel_delta_sde(drift, cfg.H, cfg.x0, payoff, sign=cfg.sde_sign, **kw),))
        if cfg.estimator in ("fd", "both"):
            runs.append(lambda: (fd_delta_sde(drift, cfg.H, cfg.x0, payoff, h=h, sign=cfg.sde_sign, **kw),))
    else:
        prm = cfg.stock_params()
        if cfg.estimator in ("bel", "both"):
            runs.append(lambda: bel_greeks_model(prm, cfg.x1, cfg.x2, payoff, H=cfg.H, **kw))
        if cfg.estimator in ("fd", "both"):
            runs.append(lambda: fd_greeks(prm, cfg.x1, cfg.x2, payoff, h=h, H=cfg.H, **kw))
    rows = []
    for run in runs:
        t0 = time.perf_counter()
        ests = run()
        ms = int(round(1000 * (time.perf_counter() - t0)))
        for e in ests:
            if not (np.isfinite(e.value) and np.isfinite(e.std_error)):
                raise FloatingPointError(f"non-finite {e.estimator.value} estimate for {e.component.value}")
            rows.append([e.component.value, e.estimator.value, e.value, e.std_error, e.n_paths, ms])
    rows.sort(key=lambda r: (r[0], r[1]))
    return Table("greeks", cfg, ["component", "estimator", "value", "std_error", "n_paths", "runtime_ms"], rows)


def cmd_stability(cfg: RunConfig) -> Table:
    scan = StabilityScan(cfg.sde_drift(), cfg.H, cfg.p, cfg.x0, cfg.gap_values, cfg.paths, cfg.seed,
                         cfg.grid, cfg.mix_spec(), sign=cfg.sde_sign)
    tab = stability_scan(scan, threads=cfg.threads)
    rows = [[r.gap, r.moment, r.stderr] for r in tab.rows]
    return Table("stability", cfg, ["gap", "moment", "stderr"], rows,
                 {"slope": tab.slope, "slope_stderr": tab.slope_stderr, "p": tab.p})


def cmd_validate(cfg: RunConfig) -> Table:
    from .validation import run_suite

    checks = run_suite(cfg.suite)
    rows = [[c.suite, c.name, "pass" if c.passed else "FAIL", c.detail] for c in checks]
    return Table("validate", cfg, ["suite", "check", "status", "detail"], rows,
                 {"passed": sum(c.passed for c in checks), "total": len(checks)})


COMMANDS = {
    "kernel-table": cmd_kernel_table,
    "sample-paths": cmd_sample_paths,
    "solve": cmd_solve,
    "simulate-model": cmd_simulate_model,
    "greeks": cmd_greeks,
    "stability": cmd_stability,
    "validate": cmd_validate,
}

_HELP = {
    "kernel-table": "tabulate K, dK/dt and R on the grid",
    "sample-paths": "sample (B, BH, W, mixed) paths",
    "solve": "Euler solution and first variation of the plain SDE",
    "simulate-model": "simulate the stock/volatility model",
    "greeks": "BEL and finite-difference Greeks",
    "stability": "moment scaling in the initial-condition gap",
    "validate": "run invariant suites, or compare two output files",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roughgreeks", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output file ('-' for stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        for key, typ in {**_COMMON, **_SPECIFIC[name]}.items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, type=str, default=None, metavar=typ.__name__.upper())
        if name == "validate":
            p.add_argument("--compare", nargs=2, metavar=("A", "B"),
                           help="check two output files for identical numbers")
    return ap


def _read_output(path):
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        cols = doc["columns"]
        rows = doc["rows"]
        h = doc.get("config_hash")
    else:
        meta = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            else:
                body.append(line.split(","))
        cols, rows = body[0], body[1:]
        h = meta.get("config_hash")
    if "runtime_ms" in cols:
        j = cols.index("runtime_ms")
        rows = [r[:j] + r[j + 1:] for r in rows]
    return h, rows


def compare_outputs(a, b):
    """Return (identical, message); refuses files with different config hashes."""
    ha, ra = _read_output(a)
    hb, rb = _read_output(b)
    if ha is None or hb is None:
        return False, "missing config hash"
    if ha != hb:
        return False, f"config hash mismatch: {ha} vs {hb}"
    if ra != rb:
        return False, "numerical content differs"
    return True, "identical"


def _write(text, cfg: RunConfig, command: str, out: str | None):
    target = out or cfg.out
    if not target:
        d = os.environ.get(OUTPUT_DIR_ENV)
        if d:
            os.makedirs(d, exist_ok=True)
            target = os.path.join(d, f"{command}_{cfg.config_hash}.{cfg.format}")
    if not target or target == "-":
        sys.stdout.write(text)
        return None
    with open(target, "w") as fh:
        fh.write(text)
    return target


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate" and args.compare:
        try:
            ok, msg = compare_outputs(*args.compare)
        except (OSError, ValueError, KeyError, IndexError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(msg)
        return EXIT_OK if ok else EXIT_VALIDATION

    keys = {**_COMMON, **_SPECIFIC[args.command]}
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k) is not None}
    if args.format:
        overrides["format"] = args.format
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RegimeWarning)
            table = COMMANDS[args.command](cfg)
        for w in caught:
            if issubclass(w.category, RegimeWarning):
                print(f"warning: {w.message}", file=sys.stderr)
    except (CapabilityError, ValueError) as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (FactorizationError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"error": "numerical", "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC

    path = _write(table.render(cfg.format), cfg, args.command, args.out)
    if path:
        print(path, file=sys.stderr)
    if args.command == "stability":
        s = table.summary
        print(f"slope={s['slope']:.4f} stderr={s['slope_stderr']:.4f} p={s['p']}", file=sys.stderr)
    if args.command == "validate":
        s = table.summary
        print(f"{s['passed']}/{s['total']} checks passed", file=sys.stderr)
        if s["passed"] != s["total"]:
            return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
