"""Command-line front end for the commodity forward benchmark.

Every flag has a key of the same name in an optional INI file passed with
``--config``; flags override the file, the file overrides the defaults::

    [model]
    preset = lucia-schwartz
    kappa = 1.5
    sigma = 0.065
    p_bar = 1
    lam = 0.25
    maturity = 0.25

    [scheme]
    scheme = rk2            ; euler | rk1 | rk2 | custom
    provider = milstein     ; euler | milstein, default depends on scheme
    tableau = my.ini        ; required for scheme = custom

    [grid]
    N = 2
    N0 = 1
    l = auto                ; or a positive number

    [run]
    n = 100
    n_list = 5,10,20,50,100
    paths = 1000
    seed = 0
    out = results           ; default: $FBSDE_FOURIER_OUT, else stdout
    format = json           ; json | csv

Exit status: 0 on success, 2 on invalid input, 3 when the solve produces
non-finite values.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    LuciaSchwartzModel,
    auto_span,
    benchmark_grid,
    closed_form_Y,
    closed_form_Z,
    convergence_study,
    e_sim,
    e_true,
    named_scheme,
    path_values,
    simulate_paths,
)
from .rk_solver import load_tableau
from .solution import NumericalError

log = logging.getLogger(__name__)

OUT_ENV = "FBSDE_FOURIER_OUT"
PRESETS = ("lucia-schwartz",)
SCHEMES = ("euler", "rk1", "rk2", "custom")
PROVIDERS = ("euler", "milstein")
FORMATS = ("json", "csv")

# key -> (config section, parser)
KEYS = {
    "preset": ("model", str),
    "kappa": ("model", float),
    "sigma": ("model", float),
    "p_bar": ("model", float),
    "lam": ("model", float),
    "maturity": ("model", float),
    "scheme": ("scheme", str),
    "provider": ("scheme", str),
    "tableau": ("scheme", str),
    "N": ("grid", int),
    "N0": ("grid", int),
    "l": ("grid", str),
    "n": ("run", int),
    "n_list": ("run", str),
    "paths": ("run", int),
    "seed": ("run", int),
    "out": ("run", str),
    "format": ("run", str),
}

DEFAULTS = {
    "preset": "lucia-schwartz",
    "scheme": "rk2",
    "provider": None,
    "tableau": None,
    "N": 2,
    "N0": 1,
    "l": "auto",
    "n": 100,
    "n_list": "5,10,20,50,100",
    "paths": 1000,
    "seed": 0,
    "out": None,
    "format": None,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: LuciaSchwartzModel
    scheme: str
    provider: str
    tableau_path: str | None
    N: int
    N0: int
    l: float | None
    n: int
    n_list: list = field(default_factory=list)
    paths: int = 1000
    seed: int = 0
    out: str | None = None
    format: str | None = None

    def identity(self, command: str) -> dict:
        """Everything that determines the numbers, used for the config hash."""
        scheme = self.build_scheme()
        return {
            "command": command,
            "model": asdict(self.model),
            "scheme": scheme.name,
            "provider": scheme.provider,
            "tableau": scheme.tableau.as_dict() if scheme.tableau else None,
            "N": self.N,
            "N0": self.N0,
            "l": "auto" if self.l is None else self.l,
            "n": self.n if command != "converge" else None,
            "n_list": self.n_list if command == "converge" else None,
            "paths": self.paths,
            "seed": self.seed,
        }

    def build_scheme(self):
        tableau = load_tableau(self.tableau_path) if self.scheme == "custom" else None
        return named_scheme(self.scheme, self.provider, tableau)

    def grid_span(self, n: int) -> float:
        return auto_span(n, self.N0) if self.l is None else self.l


def _read_config(path: str) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        if not parser.read(path):
            raise ConfigError(f"config: cannot read {path}")
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            if key not in KEYS or KEYS[key][0] != section:
                raise ConfigError(f"config: unknown key [{section}] {key}")
            try:
                values[key] = KEYS[key][1](raw)
            except ValueError:
                raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return values


def _positive_int(name, value, minimum=1):
    if not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name}: must be an integer >= {minimum}, got {value}")
    return value


def resolve_config(args: argparse.Namespace) -> RunConfig:
    given = _read_config(args.config) if args.config else {}
    for key in KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            given[key] = flag
    if args.l_auto:
        given["l"] = "auto"
    if given.get("tableau") and "scheme" not in given:
        given["scheme"] = "custom"
    values = {**DEFAULTS, "out": os.environ.get(OUT_ENV) or None, **given}

    if values["preset"] not in PRESETS:
        raise ConfigError(f"preset: unknown preset {values['preset']!r}")
    if values["tableau"] and values["scheme"] != "custom":
        raise ConfigError(f"tableau: only valid with scheme 'custom', got scheme {values['scheme']!r}")
    if values["scheme"] not in SCHEMES:
        raise ConfigError(f"scheme: must be one of {SCHEMES}, got {values['scheme']!r}")
    if values["scheme"] == "custom" and not values["tableau"]:
        raise ConfigError("tableau: scheme 'custom' needs --tableau")
    if values["provider"] is not None and values["provider"] not in PROVIDERS:
        raise ConfigError(f"provider: must be one of {PROVIDERS}, got {values['provider']!r}")
    if values["format"] is not None and values["format"] not in FORMATS:
        raise ConfigError(f"format: must be one of {FORMATS}, got {values['format']!r}")

    overrides = {"kappa": values.get("kappa"), "sigma": values.get("sigma"), "p_bar": values.get("p_bar"),
                 "lam": values.get("lam"), "T": values.get("maturity")}
    model = LuciaSchwartzModel(**{k: v for k, v in overrides.items() if v is not None})

    N = _positive_int("N", values["N"], 2)
    if N % 2:
        raise ConfigError(f"N: must be even, got {N}")
    N0 = _positive_int("N0", values["N0"], 0)
    if values["l"] == "auto":
        span = None
    else:
        try:
            span = float(values["l"])
        except ValueError:
            raise ConfigError(f"l: must be 'auto' or a number, got {values['l']!r}") from None
        if not (math.isfinite(span) and span > 0):
            raise ConfigError(f"l: must be positive, got {span}")
    n = _positive_int("n", values["n"])
    try:
        n_list = [int(v) for v in str(values["n_list"]).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"n_list: expected comma separated integers, got {values['n_list']!r}") from None
    if not n_list or any(v < 1 for v in n_list) or n_list != sorted(set(n_list)):
        raise ConfigError(f"n_list: must be a strictly increasing list of positive integers, got {values['n_list']!r}")
    paths = _positive_int("paths", values["paths"], 0)
    seed = _positive_int("seed", values["seed"], 0)

    return RunConfig(model, values["scheme"], values["provider"], values["tableau"], N, N0, span,
                     n, n_list, paths, seed, values["out"], values["format"])


def metadata(config: RunConfig, command: str) -> dict:
    identity = config.identity(command)
    digest = hashlib.sha256(json.dumps(identity, sort_keys=True).encode()).hexdigest()
    return {"version": __version__, "config_hash": digest, "seed": config.seed, "config": identity}


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return _clean(value.item())
    return value


def dump_json(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    return "" if not math.isfinite(value) else f"{value:.17g}"


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def emit(config: RunConfig, files: dict, stdout_key: str) -> None:
    """Write every file into ``config.out``, or print ``files[stdout_key]`` when no directory is set."""
    if config.out is None:
        sys.stdout.write(files[stdout_key])
        return
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
        log.info("wrote %s", out / name)


def _solve(config: RunConfig, n: int):
    scheme = config.build_scheme()
    grid = benchmark_grid(config.model, n, config.N, config.N0, config.grid_span(n))
    return scheme, scheme.solve(config.model.to_fbsde(), grid)


def cmd_solve(config: RunConfig) -> int:
    scheme, solution = _solve(config, config.n)
    y0, z0 = solution.center_values()
    truth = e_true(solution, config.model)
    summary = {
        "metadata": metadata(config, "solve"),
        "y0": y0,
        "z0": z0,
        "y0_exact": float(closed_form_Y(config.model, 0.0, config.model.x0)),
        "z0_exact": float(closed_form_Z(config.model, 0.0, config.model.x0)),
        "e_true": truth.e_true,
        "e_true_y": truth.e_true_y,
        "e_true_z": truth.e_true_z,
        "max_imag_residue": solution.max_imag_residue,
        "stable": solution.stable,
        "stability": [e.as_dict() for e in solution.stability],
    }
    if config.paths:
        sim = e_sim(solution, config.model, config.paths, config.seed, scheme.provider)
        summary.update(e_sim=sim.e_sim, e_sim_std=sim.e_sim_std, e_sim_sd=sim.e_sim_sd, clamped=sim.clamped)
    else:
        summary.update(e_sim=None, e_sim_std=None, e_sim_sd=None, clamped=None)

    files = {"solve.json": dump_json(summary)}
    if config.format == "csv" or config.out is not None:
        rows = []
        for layer in solution.layers:
            ye = closed_form_Y(config.model, layer.t, layer.x)
            ze = closed_form_Z(config.model, layer.t, layer.x)
            rows.extend(zip([layer.i] * layer.x.size, [layer.t] * layer.x.size, layer.x, layer.u, ye, layer.u_dot, ze))
        files["layers.csv"] = dump_csv(["i", "t", "x", "y_num", "y_exact", "z_num", "z_exact"], rows)
    emit(config, files, "layers.csv" if config.format == "csv" else "solve.json")
    return 0


CONVERGE_HEADER = ["n", "e_true", "e_sim", "e_sim_std", "slope_true_cum", "slope_sim_cum"]


def cmd_converge(config: RunConfig) -> int:
    if config.l is not None:
        raise ConfigError("l: the convergence study always uses l = 1.8/(N0 + n); drop --l")
    scheme = config.build_scheme()
    rows = convergence_study(config.model, scheme, config.n_list, N=config.N, N0=config.N0,
                             num_paths=config.paths, seed=config.seed)
    table = dump_csv(CONVERGE_HEADER, [[getattr(r, k) for k in CONVERGE_HEADER] for r in rows])
    summary = {
        "metadata": metadata(config, "converge"),
        "rows": [r.as_dict() for r in rows],
        "slope_true": rows[-1].slope_true_cum,
        "slope_sim": rows[-1].slope_sim_cum,
    }
    emit(config, {"converge.csv": table, "converge.json": dump_json(summary)},
         "converge.json" if config.format == "json" else "converge.csv")
    return 0


PATHS_HEADER = ["path_id", "t", "x", "y_num", "y_exact", "z_num", "z_exact"]


def cmd_paths(config: RunConfig) -> int:
    if config.paths < 1:
        raise ConfigError("paths: need at least one path")
    scheme, solution = _solve(config, config.n)
    paths = simulate_paths(solution, config.model.to_fbsde(), scheme.provider, config.paths, config.seed)
    y, z, clamped = path_values(solution, paths)
    times = solution.grid.partition.nodes
    ye = closed_form_Y(config.model, times, paths)
    ze = closed_form_Z(config.model, times, paths)
    rows = [
        (p, times[i], paths[p, i], y[p, i], ye[p, i], z[p, i], ze[p, i])
        for p in range(config.paths) for i in range(solution.n + 1)
    ]
    meta = {"metadata": metadata(config, "paths"), "clamped": clamped}
    emit(config, {"paths.csv": dump_csv(PATHS_HEADER, rows), "paths.json": dump_json(meta)},
         "paths.json" if config.format == "json" else "paths.csv")
    return 0


COMMANDS = {"solve": cmd_solve, "converge": cmd_converge, "paths": cmd_paths}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file; flags override its values")
    common.add_argument("--preset", choices=PRESETS)
    common.add_argument("--kappa", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--p-bar", dest="p_bar", type=float)
    common.add_argument("--lam", type=float)
    common.add_argument("--maturity", type=float)
    common.add_argument("--scheme", choices=SCHEMES)
    common.add_argument("--tableau", help="INI file with a [tableau] section (scheme custom)")
    common.add_argument("--provider", choices=PROVIDERS)
    common.add_argument("--n", type=int)
    common.add_argument("--n-list", dest="n_list", help="comma separated, e.g. 5,10,20,50,100")
    common.add_argument("--N", dest="N", type=int)
    common.add_argument("--N0", dest="N0", type=int)
    span = common.add_mutually_exclusive_group()
    span.add_argument("--l", dest="l")
    span.add_argument("--l-auto", dest="l_auto", action="store_true", help="l = 1.8/(N0 + n)")
    common.add_argument("--paths", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}, else stdout)")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="fbsde-fourier", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve once and report start values with their errors")
    sub.add_parser("converge", parents=[common], help="error table over --n-list with fitted orders")
    sub.add_parser("paths", parents=[common], help="per-path numerical and exact values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
