"""Batch command-line front end.

    cirfilter simulate --config run.json --out outdir
    cirfilter filter   --config run.json --out outdir
    cirfilter survival --config run.json --out outdir
    cirfilter mixture  --config run.json --out outdir
    cirfilter validate --config run.json --out outdir [--seed N]

The config file holds the model parameters ``alpha, mu0, beta, phi`` at top
level plus one optional block per command.  Every output is a CSV file with
a header line.  Exit codes: 0 success, 1 internal or validation failure,
2 bad input; errors go to stderr prefixed ``error:``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from .filter import conditional_mean, conditional_mgf, conditional_survival, run_filter
from .mixture import NegativeWeight, mixture_from_state
from .model import CirFilterError, FellerWarning, GammaLaw, JumpRecord, ModelParams, validate_params
from .oracles import particle_filter
from .simulation import IntensityPath, draw_initial_intensity, simulate_cir_paths, simulate_cox_jumps, simulate_scenario

__all__ = ["main", "CONFIG_SCHEMA", "load_config", "validation_scenarios"]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_SEED = {"type": "integer", "minimum": 0}
_GRID = {
    "oneOf": [
        {"type": "array", "items": _NUM, "minItems": 1},
        {
            "type": "object",
            "properties": {"start": _NUM, "stop": _NUM, "num": {"type": "integer", "minimum": 1}},
            "required": ["start", "stop", "num"],
            "additionalProperties": False,
        },
    ]
}
_JUMPS = {
    "jumps": {"type": "array", "items": _POS},
    "jumps_file": {"type": "string"},
    "jumps_path": {"type": "integer", "minimum": 0},
}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "alpha": _NUM,
        "mu0": _NUM,
        "beta": _NUM,
        "phi": _NUM,
        "simulate": {
            "type": "object",
            "properties": {
                "lambda0": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "prior"}]},
                "horizon": _POS,
                "step": _POS,
                "seed": _SEED,
                "paths": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "filter": {
            "type": "object",
            "properties": {
                **_JUMPS,
                "query_grid": _GRID,
                "s_values": {"type": "array", "items": _NUM},
                "horizons": {"type": "array", "items": _POS},
            },
            "additionalProperties": False,
        },
        "survival": {
            "type": "object",
            "properties": {**_JUMPS, "query_grid": _GRID, "horizons": {"type": "array", "items": _POS}},
            "additionalProperties": False,
        },
        "mixture": {
            "type": "object",
            "properties": {**_JUMPS, "t_grid": _GRID},
            "additionalProperties": False,
        },
        "validate": {
            "type": "object",
            "properties": {
                "particles": {"type": "integer", "minimum": 1000},
                "scenarios": {"type": "integer", "minimum": 1},
                "seed": _SEED,
                "horizon": _POS,
                "max_jumps": {"type": "integer", "minimum": 0},
                "query_points": {"type": "integer", "minimum": 1},
                "substep": _POS,
            },
            "additionalProperties": False,
        },
    },
    "required": ["alpha", "mu0", "beta", "phi"],
    "additionalProperties": False,
}

DEFAULT_MIXTURE_JUMPS = [1.0, 2.0, 3.0]


class BadInput(Exception):
    pass


class ValidationFailed(Exception):
    pass


def load_config(path: str | Path) -> dict[str, Any]:
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadInput(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise BadInput(f"invalid config at {where}: {exc.message}") from exc
    return config


def _grid(spec) -> list[float]:
    if isinstance(spec, dict):
        return np.linspace(spec["start"], spec["stop"], spec["num"]).tolist()
    return [float(x) for x in spec]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _read_jumps(block: dict[str, Any], base: Path) -> JumpRecord:
    if "jumps" in block and "jumps_file" in block:
        raise BadInput("give either 'jumps' or 'jumps_file', not both")
    if "jumps_file" in block:
        path = Path(block["jumps_file"])
        if not path.is_absolute():
            path = base / path
        try:
            lines = path.read_text().splitlines()
        except OSError as exc:
            raise BadInput(f"cannot read jumps file: {exc}") from exc
        times = []
        want = block.get("jumps_path", 0)
        for line in lines:
            fields = [f.strip() for f in line.split(",") if f.strip()]
            if not fields:
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError:
                continue  # header line
            if len(values) == 2:
                if int(values[0]) == want:
                    times.append(values[1])
            else:
                times.append(values[0])
    else:
        times = block.get("jumps", [])
    try:
        return JumpRecord(tuple(times))
    except CirFilterError as exc:
        raise BadInput(str(exc)) from exc


def _write_csv(path: Path, header: Sequence[str], rows) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) if not isinstance(x, str) else x for x in row])
            count += 1
    return count


def _model(config) -> tuple[ModelParams, GammaLaw]:
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", FellerWarning)
            params, prior = validate_params(config)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except CirFilterError as exc:
        raise BadInput(str(exc)) from exc
    return params, prior


def cmd_simulate(config, out: Path, seed: int | None) -> list[Path]:
    params, prior = _model(config)
    block = config.get("simulate", {})
    horizon = block.get("horizon", 10.0)
    step = block.get("step", 1e-3)
    n_paths = block.get("paths", 1)
    seed = block.get("seed", 0) if seed is None else seed
    if not step < horizon:
        raise BadInput("simulate: step must be smaller than horizon")
    ss = np.random.SeedSequence(seed)
    s_init, s_paths, s_jumps = ss.spawn(3)
    start = block.get("lambda0", "prior")
    if start == "prior":
        lam0 = draw_initial_intensity(prior, np.random.default_rng(s_init), size=n_paths)
    else:
        lam0 = np.full(n_paths, float(start))
    if n_paths:
        grid, lam = simulate_cir_paths(params, lam0, horizon, step, n_paths, int(s_paths.generate_state(1)[0]))
    else:
        grid, lam = np.zeros(0), np.zeros((0, 0))
    jump_seeds = s_jumps.generate_state(max(n_paths, 1))
    path_rows = ((i, t, x) for i in range(n_paths) for t, x in zip(grid, lam[i]))
    paths_file = out / "paths.csv"
    jumps_file = out / "jumps.csv"
    _write_csv(paths_file, ["path", "t", "lambda"], path_rows)

    def jump_rows():
        for i in range(n_paths):
            path = IntensityPath(grid, lam[i], float(grid[1] - grid[0]))
            for t in simulate_cox_jumps(path, int(jump_seeds[i])):
                yield i, t

    _write_csv(jumps_file, ["path", "time"], jump_rows())
    return [paths_file, jumps_file]


def _col(prefix: str, x: float, suffix: str = "") -> str:
    return f"{prefix}{x:g}{suffix}"


def cmd_filter(config, out: Path, base: Path) -> list[Path]:
    params, prior = _model(config)
    block = config.get("filter", {})
    jumps = _read_jumps(block, base)
    grid = _grid(block.get("query_grid", {"start": 0.0, "stop": 10.0, "num": 101}))
    if any(t < 0 for t in grid):
        raise BadInput("filter: query times must be nonnegative")
    grid = sorted(grid)
    s_values = block.get("s_values", [])
    horizons = block.get("horizons", [1.0])
    header = ["t", "n", "Q", "lambda_hat"]
    header += [_col("mgf_", s) for s in s_values] + [_col("survival_", h, "y") for h in horizons]
    rows = []
    jump_set = set(jumps.times)
    for t, tag, state in run_filter(params, prior.rate, jumps, grid):
        if tag == "" and t in jump_set:
            continue  # already emitted as the post-jump row
        if any(s >= state.Q for s in s_values):
            raise BadInput(f"filter: s value outside domain s < Q={state.Q!r} at t={t}")
        row = [t, state.n, state.Q, conditional_mean(state)]
        row += [conditional_mgf(state, s) for s in s_values]
        row += [conditional_survival(state, h) for h in horizons]
        rows.append(row)
    path = out / "filter.csv"
    _write_csv(path, header, rows)
    return [path]


def cmd_survival(config, out: Path, base: Path) -> list[Path]:
    params, prior = _model(config)
    block = config.get("survival", {})
    jumps = _read_jumps(block, base)
    grid = sorted(_grid(block.get("query_grid", [0.0])))
    horizons = block.get("horizons", np.linspace(0.5, 10.0, 20).tolist())
    rows = []
    for t, tag, state in run_filter(params, prior.rate, jumps, grid):
        if tag:
            continue
        for h in horizons:
            rows.append([t, state.n, h, conditional_survival(state, h)])
    path = out / "survival.csv"
    _write_csv(path, ["t", "n", "horizon", "survival"], rows)
    return [path]


def _default_mixture_grid() -> list[float]:
    pts = []
    for start in (2.0, 3.0):
        pts += np.linspace(start, start + 1.0, 101)[:-1].tolist()
    return pts


def cmd_mixture(config, out: Path, base: Path) -> list[Path]:
    params, prior = _model(config)
    block = config.get("mixture", {})
    jumps = _read_jumps(block, base) if ("jumps" in block or "jumps_file" in block) else JumpRecord(
        tuple(DEFAULT_MIXTURE_JUMPS)
    )
    grid = sorted(_grid(block["t_grid"])) if "t_grid" in block else _default_mixture_grid()
    by_n: dict[int, list] = {}
    negative = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NegativeWeight)
        for t, tag, state in run_filter(params, prior.rate, jumps, grid):
            if tag:
                continue
            mix = mixture_from_state(state)
            by_n.setdefault(state.n, []).append([t, mix.rate, *mix.weights])
        negative = len(caught)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    paths = []
    for n, rows in sorted(by_n.items()):
        path = out / f"mixture_n{n}.csv"
        _write_csv(path, ["t", "Q", *[f"pi_{j}" for j in range(n + 1)]], rows)
        paths.append(path)
    if negative:
        print(f"warning: {negative} grid points with negative mixing weights", file=sys.stderr)
    return paths


def validation_scenarios(
    params: ModelParams,
    prior: GammaLaw,
    n_scenarios: int,
    seed: int,
    horizon: float = 8.0,
    max_jumps: int = 8,
    query_points: int = 10,
    step: float = 1e-3,
) -> list[tuple[JumpRecord, list[float]]]:
    """Simulated jump records with query grids for oracle comparisons.

    Scenarios with more than ``max_jumps`` jumps are cut halfway between the
    last kept jump and the next one.
    """
    out = []
    seeds = np.random.SeedSequence(seed).generate_state(n_scenarios)
    for k in range(n_scenarios):
        sim = simulate_scenario(params, prior, horizon, step, int(seeds[k]))
        times = sim.jumps.times
        end = horizon
        if len(times) > max_jumps:
            end = 0.5 * (times[max_jumps] + (times[max_jumps - 1] if max_jumps else 0.0))
            times = times[:max_jumps]
        queries = np.linspace(0.0, end, query_points + 1)[1:].tolist()
        out.append((JumpRecord(times), queries))
    return out


def cmd_validate(config, out: Path, seed: int | None) -> list[Path]:
    params, prior = _model(config)
    block = config.get("validate", {})
    n_particles = block.get("particles", 100_000)
    n_scen = block.get("scenarios", 20)
    seed = block.get("seed", 0) if seed is None else seed
    scenarios = validation_scenarios(
        params,
        prior,
        n_scen,
        seed,
        horizon=block.get("horizon", 8.0),
        max_jumps=block.get("max_jumps", 8),
        query_points=block.get("query_points", 10),
    )
    pf_seeds = np.random.SeedSequence([seed, 1]).generate_state(n_scen)
    rows = []
    for k, (jumps, queries) in enumerate(scenarios):
        traj = particle_filter(
            jumps, params, prior, n_particles, queries, seed=int(pf_seeds[k]), substep=block.get("substep", 0.02)
        )
        exact = [conditional_mean(state) for _, tag, state in run_filter(params, prior.rate, jumps, queries) if tag == ""]
        for t, ex, est, se in zip(queries, exact, traj.mean, traj.mean_se):
            rows.append([k, t, ex, est, se, (est - ex) / se])
    path = out / "validate.csv"
    _write_csv(path, ["scenario", "t", "exact_lambda_hat", "pf_estimate", "pf_se", "z_score"], rows)
    n_checks = len(rows)
    exceed = sum(1 for r in rows if abs(r[-1]) > 3.0)
    allowed = math.floor(0.01 * n_checks)
    print(f"validate: {exceed}/{n_checks} checks with |z| > 3 (allowed {allowed})", file=sys.stderr)
    if exceed > allowed:
        raise ValidationFailed(f"{exceed} of {n_checks} checks exceed |z| = 3, allowed {allowed}")
    return [path]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cirfilter", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "simulate CIR intensity paths and Cox jump times"),
        ("filter", "run the exact filter over a query grid"),
        ("survival", "partial-information survival curves"),
        ("mixture", "Gamma-mixture weights over a time grid"),
        ("validate", "compare the exact filter with a particle filter"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the block's seed")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Path(args.out)
    try:
        if args.seed is not None and args.seed < 0:
            raise BadInput("--seed must be nonnegative")
        config = load_config(args.config)
        base = Path(args.config).resolve().parent
        if args.command == "simulate":
            written = cmd_simulate(config, out, args.seed)
        elif args.command == "filter":
            written = cmd_filter(config, out, base)
        elif args.command == "survival":
            written = cmd_survival(config, out, base)
        elif args.command == "mixture":
            written = cmd_mixture(config, out, base)
        else:
            written = cmd_validate(config, out, args.seed)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CirFilterError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
