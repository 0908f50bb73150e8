"""Command line: each subcommand writes one data file plus its manifest.

Subcommands
-----------
phase-shifts   square-well phase shifts and scattering lengths versus energy
busch          trap eigenvalues of one pseudopotential channel
dressed-beta   dressed scattering length versus energy for several beta values
spectrum       separation sweep with both solvers (pseudopotential and exact)
box-toy        eigenpairs of the one-dimensional shell toy model
resonances     avoided-crossing report of a separation sweep

Exit status: 0 success, 2 configuration error, 3 solver non-convergence
(a ``<out>.diagnostic.json`` file is written), 4 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import schema
from .exactref import box_toy
from .freespace import PoleError, SquareWell, phase_shift, scattering_length_fn
from .specfun import ConvergenceError, PrecisionLossError
from .trapbasis import (ConsistencyError, IndeterminateError, busch_eigenvalues,
                        dressed_beta_poles, energy_to_nu, make_pseudopotential, nu_to_energy)
from .trapres import NonRealSpectrumError, SelfConsistencyError, thread_count
from .workflows import SpectrumConfig, run_spectrum

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_INVARIANT = 0, 2, 3, 4

COMMON_DEFAULTS = {
    "V0": 489.9, "R0": 0.1, "rs": 0.05, "lmax": 8, "ecut": 24.0,
    "dz_min": 0.0, "dz_max": 3.0, "dz_step": 0.05, "out": None, "format": "csv",
}

COMMAND_DEFAULTS = {
    "phase-shifts": {"emin": 0.0, "emax": 14.0, "npts": 50, "lvals": [0, 1]},
    "busch": {"l": 0, "beta": None, "E0": 1.5, "numax": 10.0},
    "dressed-beta": {"l": 1, "E0": 1.0, "betas": [-5.0, 1.0, 10.0], "emin": -4.0,
                     "emax": 8.0, "npts": 601},
    "spectrum": {"ntracks": 8, "e0_step": 0.05, "gap_threshold": 0.2, "solvers": ["pseudo", "exact"]},
    "box-toy": {"u": 1.0, "L": 1.0, "nstates": 20, "npts": 201},
    "resonances": {"ntracks": 8, "e0_step": 0.05, "gap_threshold": 0.2, "solvers": ["pseudo", "exact"]},
}
COMMAND_DEFAULTS["box-toy"]["rs"] = 0.3

TOLERANCES = {
    "busch_root_relative_width": 1e-14,
    "eigenpair_residual": 1e-8,
    "imaginary_part_relative": 1e-8,
    "scattering_length_pole_bracket": 1e-12,
    "u_precision_budget": 1e-12,
}


class ConfigError(ValueError):
    pass


def _add_common(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file of options; flags override it")
    p.add_argument("--V0", type=float, default=S, help="square-well depth")
    p.add_argument("--R0", type=float, default=S, help="square-well radius")
    p.add_argument("--rs", type=float, default=S, help="shell radius")
    p.add_argument("--lmax", type=int, default=S, help="largest partial wave in the basis")
    p.add_argument("--ecut", type=float, default=S, help="basis energy cutoff")
    p.add_argument("--dz-min", dest="dz_min", type=float, default=S)
    p.add_argument("--dz-max", dest="dz_max", type=float, default=S)
    p.add_argument("--dz-step", dest="dz_step", type=float, default=S)
    p.add_argument("--out", default=S, help="output data file")
    p.add_argument("--format", choices=("csv", "json"), default=S)


def build_parser():
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="deltashell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"deltashell {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase-shifts", help="square-well phase shifts")
    _add_common(p)
    p.add_argument("--emin", type=float, default=S)
    p.add_argument("--emax", type=float, default=S)
    p.add_argument("--npts", type=int, default=S)
    p.add_argument("--lvals", type=int, nargs="+", default=S)

    p = sub.add_parser("busch", help="trap eigenvalues of one channel")
    _add_common(p)
    p.add_argument("--l", type=int, default=S)
    p.add_argument("--beta", type=float, default=S,
                   help="constant scattering length (default: from the square well)")
    p.add_argument("--E0", type=float, default=S, help="reference energy")
    p.add_argument("--numax", type=float, default=S, help="largest energy index searched")

    p = sub.add_parser("dressed-beta", help="dressed scattering length curves")
    _add_common(p)
    p.add_argument("--l", type=int, default=S)
    p.add_argument("--E0", type=float, default=S)
    p.add_argument("--betas", type=float, nargs="+", default=S)
    p.add_argument("--emin", type=float, default=S)
    p.add_argument("--emax", type=float, default=S)
    p.add_argument("--npts", type=int, default=S)

    for name in ("spectrum", "resonances"):
        p = sub.add_parser(name, help="separation sweep" if name == "spectrum" else "resonance report")
        _add_common(p)
        p.add_argument("--ntracks", type=int, default=S)
        p.add_argument("--e0-step", dest="e0_step", type=float, default=S)
        p.add_argument("--gap-threshold", dest="gap_threshold", type=float, default=S)
        p.add_argument("--solvers", nargs="+", choices=("pseudo", "exact"), default=S)

    p = sub.add_parser("box-toy", help="one-dimensional shell toy model")
    _add_common(p)
    p.add_argument("--u", type=float, default=S, help="shell strength (> -1)")
    p.add_argument("--L", type=float, default=S, help="box length")
    p.add_argument("--nstates", type=int, default=S)
    p.add_argument("--npts", type=int, default=S, help="samples of each function")
    return parser


def resolve_config(argv):
    """Parsed options: built-in defaults, then the config file, then flags."""
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[command])
    path = args.pop("config", None)
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        loaded.pop("command", None)
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(args)
    validate(command, cfg)
    return command, cfg


def validate(command, cfg):
    def positive(*keys):
        for k in keys:
            v = cfg[k]
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{k} must be positive, got {v!r}")

    positive("R0", "rs", "ecut", "dz_step")
    if not cfg["V0"] >= 0:
        raise ConfigError("V0 must be non-negative")
    if int(cfg["lmax"]) != cfg["lmax"] or cfg["lmax"] < 1:
        raise ConfigError("lmax must be an integer >= 1")
    if not 0 <= cfg["dz_min"] <= cfg["dz_max"]:
        raise ConfigError("need 0 <= dz_min <= dz_max")
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    if cfg["out"] is None:
        cfg["out"] = f"{command}.{cfg['format']}"
    if command in ("phase-shifts", "dressed-beta"):
        positive("npts")
        if not cfg["emax"] > cfg["emin"]:
            raise ConfigError("need emax > emin")
    if command == "phase-shifts" and cfg["emin"] < 0:
        raise ConfigError("phase shifts need emin >= 0")
    if command == "busch" and cfg["l"] < 0:
        raise ConfigError("l must be non-negative")
    if command in ("spectrum", "resonances"):
        positive("ntracks", "e0_step", "gap_threshold")
        if not set(cfg["solvers"]) <= {"pseudo", "exact"} or not cfg["solvers"]:
            raise ConfigError("solvers must be drawn from pseudo, exact")
    if command == "box-toy":
        positive("L", "nstates", "npts")
        if not cfg["u"] > -1:
            raise ConfigError("u must exceed -1")
        if not 0 < cfg["rs"] < cfg["L"]:
            raise ConfigError("need 0 < rs < L")


# ---------------------------------------------------------------------------
# Output helpers


def _sibling(path, suffix):
    path = Path(path)
    return path.with_name(f"{path.stem}_{suffix}{path.suffix}")


def _write_table(path, fmt, columns, rows, command, cfg, comments=(), extra=None):
    if fmt == "csv":
        schema.write_csv(path, columns, rows, comments)
    else:
        recs = [dict(zip(columns, r)) if not isinstance(r, dict) else r for r in rows]
        schema.write_json(path, {"columns": list(columns), "rows": recs, "notes": list(comments)})
    schema.write_manifest(path, command, cfg, TOLERANCES, extra)
    return [Path(path)]


# ---------------------------------------------------------------------------
# Commands


def cmd_phase_shifts(cfg):
    well = SquareWell(cfg["V0"], cfg["R0"])
    n = int(cfg["npts"])
    # the grid excludes the lower end so that E = 0 is never sampled
    E = cfg["emin"] + (cfg["emax"] - cfg["emin"]) * np.arange(1, n + 1) / n
    rows = []
    for l in cfg["lvals"]:
        beta = scattering_length_fn(well, l, float(E[0]), float(E[-1]), n=n)
        for e in E:
            d = float(phase_shift(well, l, e))
            try:
                b = beta(float(e))
            except PoleError:
                b = math.nan
            rows.append((l, float(e), d, math.tan(d), b))
    return _write_table(cfg["out"], cfg["format"], ("l", "E", "delta", "tan_delta", "beta"),
                        rows, "phase-shifts", cfg)


def cmd_busch(cfg):
    l = int(cfg["l"])
    if cfg["beta"] is None:
        well = SquareWell(cfg["V0"], cfg["R0"])
        beta = scattering_length_fn(well, l, cfg["E0"] - 5.0, cfg["E0"] + 5.0)
    else:
        beta = float(cfg["beta"])
    spec = make_pseudopotential(l, cfg["rs"], cfg["E0"], beta)
    nus = busch_eigenvalues(spec, (-8.0, float(cfg["numax"])))
    rows = [(l, k, float(nu), float(nu_to_energy(nu, l))) for k, nu in enumerate(nus)]
    return _write_table(cfg["out"], cfg["format"], ("l", "index", "nu", "E"), rows, "busch", cfg)


def cmd_dressed_beta(cfg):
    l = int(cfg["l"])
    E = np.linspace(cfg["emin"], cfg["emax"], int(cfg["npts"]))
    rows, poles = [], {}
    for b in cfg["betas"]:
        spec = make_pseudopotential(l, cfg["rs"], cfg["E0"], float(b))
        with np.errstate(divide="ignore", invalid="ignore"):
            num, den = _dressed(spec, E)
            vals = np.where(den == 0, math.nan, num / np.where(den == 0, 1.0, den))
        pl = dressed_beta_poles(spec, cfg["emin"], cfg["emax"])
        poles[repr(float(b))] = [float(0.5 * (lo + hi)) for lo, hi in pl]
        rows.extend((float(b), float(e), float(v)) for e, v in zip(E, vals))
    comments = [f"beta={k} poles at E={', '.join(repr(p) for p in v)}" for k, v in poles.items()]
    return _write_table(cfg["out"], cfg["format"], ("beta0", "E", "beta_tilde"), rows,
                        "dressed-beta", cfg, comments, {"poles": poles})


def _dressed(spec, E):
    from .trapbasis import _dressed_parts
    return _dressed_parts(spec, energy_to_nu(E, spec.l))


def _spectrum_config(cfg):
    return SpectrumConfig(V0=cfg["V0"], R0=cfg["R0"], r_s=cfg["rs"], l_max=int(cfg["lmax"]),
                          E_cut=cfg["ecut"], dz_min=cfg["dz_min"], dz_max=cfg["dz_max"],
                          dz_step=cfg["dz_step"], n_tracks=int(cfg["ntracks"]),
                          e0_step=cfg["e0_step"], gap_threshold=cfg["gap_threshold"])


def cmd_spectrum(cfg):
    run = run_spectrum(_spectrum_config(cfg), tuple(cfg["solvers"]))
    written = []
    first = True
    for name, curve in (("pseudo", run.pseudo), ("exact", run.exact)):
        if curve is None:
            continue
        path = cfg["out"] if first else _sibling(cfg["out"], name)
        first = False
        written += _write_table(path, cfg["format"], schema.SPECTRUM_COLUMNS,
                                schema.spectrum_rows(curve), "spectrum", cfg,
                                [f"solver={name}"] + [f"warning: {w}" for w in curve.warnings],
                                {"solver": name, "n_per_l": run.n_per_l})
    return written


def cmd_resonances(cfg):
    run = run_spectrum(_spectrum_config(cfg), tuple(cfg["solvers"]))
    written = []
    first = True
    for name, curve, res in (("pseudo", run.pseudo, run.pseudo_resonances),
                             ("exact", run.exact, run.exact_resonances)):
        if curve is None:
            continue
        path = cfg["out"] if first else _sibling(cfg["out"], name)
        first = False
        recs = schema.resonance_records(res)
        if cfg["format"] == "json":
            schema.write_json(path, recs)
            schema.write_manifest(path, "resonances", cfg, TOLERANCES, {"solver": name})
            written.append(Path(path))
        else:
            written += _write_table(path, "csv", schema.RESONANCE_KEYS, recs, "resonances", cfg,
                                    [f"solver={name}"], {"solver": name})
    return written


def cmd_box_toy(cfg):
    res = box_toy(cfg["u"], cfg["rs"], cfg["L"], int(cfg["nstates"]))
    r = np.linspace(0.0, cfg["L"], int(cfg["npts"]))
    F, P = res.evaluate(r)
    cols = ["r"] + [f"{s}_{n}" for n in range(res.k.size) for s in ("F", "P")]
    rows = []
    for i, x in enumerate(r):
        row = [float(x)]
        for n in range(res.k.size):
            row += [float(F[n, i]), float(P[n, i])]
        rows.append(row)
    levels = [{"index": n, "k": float(res.k[n]), "E": float(res.energies[n])} for n in range(res.k.size)]
    comments = ["E_n = " + ", ".join(repr(float(e)) for e in res.energies)]
    return _write_table(cfg["out"], cfg["format"], cols, rows, "box-toy", cfg, comments,
                        {"levels": levels})


COMMANDS = {
    "phase-shifts": cmd_phase_shifts, "busch": cmd_busch, "dressed-beta": cmd_dressed_beta,
    "spectrum": cmd_spectrum, "box-toy": cmd_box_toy, "resonances": cmd_resonances,
}


def _diagnose(cfg, command, exc):
    path = Path(str(cfg["out"]) + ".diagnostic.json")
    path.write_text(schema.dumps({"command": command, "error": type(exc).__name__,
                                  "message": str(exc), "parameters": cfg,
                                  "bracket": getattr(exc, "bracket", None),
                                  "version": __version__}))
    return path


def main(argv=None):
    """Entry point; returns the exit status."""
    try:
        command, cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"deltashell: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        # argparse exits with 2 on bad flags and 0 on --help/--version
        return int(exc.code or 0)
    cfg["threads"] = thread_count()
    out_dir = Path(cfg["out"]).parent
    if not out_dir.is_dir():
        print(f"deltashell: config error: output directory {out_dir} does not exist", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            written = COMMANDS[command](cfg)
    except (ConvergenceError, PrecisionLossError, SelfConsistencyError, PoleError,
            IndeterminateError, RuntimeError) as exc:
        diag = _diagnose(cfg, command, exc)
        print(f"deltashell: solver did not converge: {exc} (see {diag})", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (NonRealSpectrumError, ConsistencyError) as exc:
        print(f"deltashell: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"deltashell: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
