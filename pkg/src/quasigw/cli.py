"""Command line front end.

Subcommands::

    kernel        class transition matrix with row-sum diagnostics
    perron        growth factor and class profile of the mean matrix
    quasispecies  limiting class distribution (closed form vs recurrence)
    converge      finite-length profiles against the limiting distribution
    simulate      class-count trajectories / survivor-averaged frequencies
    extinction    per-class extinction probabilities, optionally vs Monte Carlo

Options may also come from a flat ``key=value`` config file (``--config``);
explicit flags win.  Output goes to stdout or ``--out`` as CSV (metadata in
leading ``#`` comment lines, floats with 17 significant digits) or JSON
(``{"config": ..., "results": ..., "diagnostics": ...}``).  For a fixed
config and seed the output is byte-identical across runs on one platform,
except for the recorded wall-clock duration.

Exit status: 0 on success (including a disordered-regime notice), 2 on bad
usage or non-convergence, 3 when every simulation replica went extinct.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .kernel import ModelParams, lumped_kernel_matrix
from .quasispecies import (
    QuasispeciesParams,
    Regime,
    classify_regime,
    qs_normalization_check,
    qs_pmf,
    qs_pmf_by_recurrence,
)
from .simulate import (
    AllExtinctError,
    ResourceLimitError,
    RngSpec,
    conditioned_frequencies,
    extinction_mc,
    run_trajectory,
)
from .spectral import (
    ConvergenceError,
    extinction_probabilities,
    mean_matrix,
    perron,
    perron_bounds_check,
)

_REQUIRED = object()


def _choice(*options):
    def conv(s):
        if s not in options:
            raise argparse.ArgumentTypeError(f"expected one of {', '.join(options)}")
        return s

    return conv


def _int_list(s):
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {s!r}") from e


def _big_int(s):
    return int(float(s))


_OUT_OPTS = {
    "out": (str, None, "write output to this path instead of stdout"),
    "format": (_choice("csv", "json"), "csv", "output format (csv or json)"),
    "config": (str, None, "flat key=value config file; explicit flags override it"),
}

_MODEL_OPTS = {
    "sigma": (float, _REQUIRED, "master-class fitness, >= 1"),
    "ell": (int, _REQUIRED, "sequence length"),
    "kappa": (int, 2, "alphabet size, >= 2"),
    "q": (float, None, "per-locus mutation probability (exclusive with --a)"),
    "a": (float, None, "mutation pressure; sets q = a / ell (exclusive with --q)"),
}

_TABLES = {
    "kernel": {**_MODEL_OPTS, **_OUT_OPTS},
    "perron": {
        **_MODEL_OPTS,
        "tol": (float, 1e-12, "relative convergence tolerance"),
        "max_iter": (int, 10**6, "iteration budget"),
        "k_report": (int, 10, "report classes 0..k_report"),
        **_OUT_OPTS,
    },
    "quasispecies": {
        "sigma": (float, _REQUIRED, "master-class fitness, > 1"),
        "a": (float, _REQUIRED, "mutation pressure"),
        "kmax": (int, 30, "evaluate classes 0..kmax"),
        "tol": (float, 1e-15, "relative series truncation tolerance"),
        **_OUT_OPTS,
    },
    "converge": {
        "sigma": (float, _REQUIRED, "master-class fitness, > 1"),
        "a": (float, _REQUIRED, "mutation pressure; per length q = a / ell"),
        "kappa": (int, 2, "alphabet size, >= 2"),
        "ell_grid": (_int_list, _REQUIRED, "comma-separated sequence lengths"),
        "k_report": (int, 5, "compare classes 0..k_report"),
        "tol": (float, 1e-12, "power iteration tolerance"),
        "max_iter": (int, 10**6, "power iteration budget"),
        **_OUT_OPTS,
    },
    "simulate": {
        **_MODEL_OPTS,
        "mode": (_choice("trajectory", "frequencies"), "trajectory",
                 "single trajectory or survivor-averaged frequencies"),
        "z0": (str, "0:100", "initial counts as class:count[,class:count...]"),
        "n_gens": (int, 12, "generations to run"),
        "n_replicas": (int, 200, "replicas (frequencies mode)"),
        "pop_cap": (_big_int, 10**12, "stop a run once the population exceeds this"),
        "seed": (int, 0, "master seed"),
        "threads": (int, 1, "worker threads (frequencies mode)"),
        **_OUT_OPTS,
    },
    "extinction": {
        **_MODEL_OPTS,
        "tol": (float, 1e-12, "fixed-point tolerance"),
        "max_iter": (int, 10**5, "fixed-point iteration budget"),
        "mc": (int, 0, "if > 0, Monte Carlo replicas per starting class"),
        "n_gens": (int, 100, "Monte Carlo horizon"),
        "escape_cap": (_big_int, 10**6, "population size at which a run counts as surviving"),
        "seed": (int, 0, "master seed"),
        **_OUT_OPTS,
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quasigw",
        description="sharp-peak quasispecies toolkit",
    )
    parser.add_argument("--version", action="version", version=f"quasigw {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for command, table in _TABLES.items():
        sub = subs.add_parser(command)
        for name, (conv, _default, help_text) in table.items():
            sub.add_argument(
                "--" + name.replace("_", "-"),
                dest=name,
                type=conv,
                default=None,
                help=help_text,
            )
    return parser


def _load_config_file(path: str) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line is not key=value: {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve(args: argparse.Namespace, table: dict) -> dict:
    cfg = _load_config_file(args.config) if args.config else {}
    ignored = set(cfg) - set(table)
    if ignored:
        print(f"notice: ignoring config keys {sorted(ignored)}", file=sys.stderr)
    resolved = {}
    for name, (conv, default, _help) in table.items():
        value = getattr(args, name)
        if value is None and name in cfg:
            try:
                value = conv(cfg[name])
            except argparse.ArgumentTypeError as e:
                raise ValueError(f"config key {name}: {e}") from e
        if value is None:
            if default is _REQUIRED:
                raise ValueError(f"missing required option --{name.replace('_', '-')}")
            value = default
        resolved[name] = value
    return resolved


def _model_params(resolved: dict) -> ModelParams:
    q, a = resolved.get("q"), resolved.get("a")
    if q is None and a is None:
        raise ValueError("provide exactly one of --q or --a")
    if q is not None and a is not None:
        raise ValueError("options --q and --a are mutually exclusive")
    if q is None:
        q = a / resolved["ell"]
    params = ModelParams(
        sigma=resolved["sigma"], ell=resolved["ell"], kappa=resolved["kappa"], q=q
    )
    resolved["q"] = params.q
    resolved["a"] = params.a
    return params


def _parse_z0(spec: str, ell: int) -> np.ndarray:
    z = np.zeros(ell + 1, dtype=np.int64)
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        k_str, sep, n_str = part.partition(":")
        if not sep:
            raise ValueError(f"z0 entries look like class:count, got {part!r}")
        k, n = int(k_str), int(n_str)
        if not 0 <= k <= ell:
            raise ValueError(f"z0 class {k} outside [0, {ell}]")
        if n < 0:
            raise ValueError(f"z0 count must be >= 0, got {n}")
        z[k] += n
    return z


def cmd_kernel(resolved: dict):
    params = _model_params(resolved)
    m = lumped_kernel_matrix(params)
    dev = np.abs(m.sum(axis=1) - 1.0)
    columns = ["b"] + [f"c{j}" for j in range(params.ell + 1)] + ["row_sum_dev"]
    rows = []
    for b in range(params.ell + 1):
        row = {"b": b, "row_sum_dev": float(dev[b])}
        for j in range(params.ell + 1):
            row[f"c{j}"] = float(m[b, j])
        rows.append(row)
    diagnostics = {"max_row_sum_dev": float(dev.max())}
    return columns, rows, diagnostics, 0


def cmd_perron(resolved: dict):
    params = _model_params(resolved)
    kernel = lumped_kernel_matrix(params)
    pair = perron(mean_matrix(params, kernel), resolved["tol"], resolved["max_iter"])
    bounds = perron_bounds_check(pair, params, kernel=kernel, k_max=resolved["k_report"])
    identity_gap = abs(pair.lam - ((params.sigma - 1.0) * float(pair.rho[0]) + 1.0))
    k_top = min(resolved["k_report"], params.ell)
    columns = ["k", "rho"]
    rows = [{"k": k, "rho": float(pair.rho[k])} for k in range(k_top + 1)]
    diagnostics = {
        "lambda": pair.lam,
        "residual": pair.residual,
        "iterations": pair.iterations,
        "identity_gap": identity_gap,
        "lambda_in_range": bool(1.0 < pair.lam < params.sigma),
        "bounds_ok": bounds.passed,
    }
    return columns, rows, diagnostics, 0


def cmd_quasispecies(resolved: dict):
    qp = QuasispeciesParams(sigma=resolved["sigma"], a=resolved["a"])
    regime = classify_regime(qp)
    kmax, tol = resolved["kmax"], resolved["tol"]
    columns = ["k", "closed_form", "recurrence", "abs_diff", "running_sum"]
    diagnostics = {"regime": regime.value, "threshold": qp.threshold}
    if regime is Regime.DISORDERED:
        print(
            "notice: sigma * exp(-a) <= 1, disordered regime; "
            "the limiting class distribution is identically zero",
            file=sys.stderr,
        )
        rows = [
            {"k": k, "closed_form": 0.0, "recurrence": 0.0, "abs_diff": 0.0, "running_sum": 0.0}
            for k in range(kmax + 1)
        ]
        return columns, rows, diagnostics, 0
    closed = [qs_pmf(qp, k, tol) for k in range(kmax + 1)]
    rec = qs_pmf_by_recurrence(qp, kmax)
    partial, tail = qs_normalization_check(qp, kmax, tol)
    rows = []
    running = 0.0
    for k in range(kmax + 1):
        running += closed[k]
        rows.append(
            {
                "k": k,
                "closed_form": closed[k],
                "recurrence": float(rec[k]),
                "abs_diff": abs(closed[k] - float(rec[k])),
                "running_sum": running,
            }
        )
    diagnostics.update(
        {
            "partial_sum": partial,
            "tail_bound": tail,
            "max_abs_diff": max(r["abs_diff"] for r in rows),
        }
    )
    return columns, rows, diagnostics, 0


def cmd_converge(resolved: dict):
    qp = QuasispeciesParams(sigma=resolved["sigma"], a=resolved["a"])
    regime = classify_regime(qp)
    lam_limit = max(1.0, qp.threshold)
    grid = resolved["ell_grid"]
    if not grid:
        raise ValueError("--ell-grid must list at least one length")
    k_top = min(resolved["k_report"], min(grid))
    q_limit = [qs_pmf(qp, k) for k in range(k_top + 1)]
    columns = ["ell", "q", "lambda", "lambda_gap"]
    columns += [f"rho{k}" for k in range(k_top + 1)]
    columns += [f"gap{k}" for k in range(k_top + 1)]
    rows = []
    for ell in grid:
        params = ModelParams(sigma=resolved["sigma"], ell=ell, kappa=resolved["kappa"],
                             q=resolved["a"] / ell)
        pair = perron(mean_matrix(params), resolved["tol"], resolved["max_iter"])
        row = {
            "ell": ell,
            "q": params.q,
            "lambda": pair.lam,
            "lambda_gap": abs(pair.lam - lam_limit),
        }
        for k in range(k_top + 1):
            row[f"rho{k}"] = float(pair.rho[k])
            row[f"gap{k}"] = abs(float(pair.rho[k]) - q_limit[k])
        rows.append(row)
    diagnostics = {"regime": regime.value, "threshold": qp.threshold, "lambda_limit": lam_limit}
    return columns, rows, diagnostics, 0


def cmd_simulate(resolved: dict):
    params = _model_params(resolved)
    z0 = _parse_z0(resolved["z0"], params.ell)
    if resolved["mode"] == "trajectory":
        rng = RngSpec(resolved["seed"], 0).generator()
        t = run_trajectory(z0, params, resolved["n_gens"], rng, pop_cap=resolved["pop_cap"])
        columns = ["generation", "total", "extinct"] + [f"count{k}" for k in range(params.ell + 1)]
        rows = []
        for g in range(t.counts.shape[0]):
            row = {"generation": g, "total": int(t.counts[g].sum()),
                   "extinct": bool(t.counts[g].sum() == 0)}
            for k in range(params.ell + 1):
                row[f"count{k}"] = int(t.counts[g, k])
            rows.append(row)
        diagnostics = {
            "extinct": t.extinct,
            "capped": t.capped,
            "extinct_at": -1 if t.extinct_at is None else t.extinct_at,
            "capped_at": -1 if t.capped_at is None else t.capped_at,
            "recorded_generations": int(t.counts.shape[0]),
        }
        return columns, rows, diagnostics, 0
    est = conditioned_frequencies(
        params,
        z0,
        n_gens=resolved["n_gens"],
        n_replicas=resolved["n_replicas"],
        seed=resolved["seed"],
        pop_cap=resolved["pop_cap"],
        n_threads=resolved["threads"],
    )
    columns = ["k", "mean_freq", "se"]
    rows = [
        {"k": k, "mean_freq": float(est.mean[k]), "se": float(est.se[k])}
        for k in range(params.ell + 1)
    ]
    diagnostics = {
        "n_survivors": est.n_survivors,
        "n_replicas": est.n_replicas,
        "n_generations": est.n_generations,
    }
    return columns, rows, diagnostics, 0


def cmd_extinction(resolved: dict):
    params = _model_params(resolved)
    kernel = lumped_kernel_matrix(params)
    s = extinction_probabilities(params, resolved["tol"], resolved["max_iter"], kernel=kernel)
    fit = np.ones(params.ell + 1)
    fit[0] = params.sigma
    residual = float(np.max(np.abs(np.exp(fit * (kernel @ s - 1.0)) - s)))
    columns = ["k", "p_extinct"]
    rows = [{"k": k, "p_extinct": float(s[k])} for k in range(params.ell + 1)]
    diagnostics = {"fixed_point_residual": residual}
    if resolved["mc"] > 0:
        columns += ["mc_freq", "mc_se"]
        for k in range(params.ell + 1):
            rep = extinction_mc(
                params,
                n_replicas=resolved["mc"],
                start_class=k,
                n_gens=resolved["n_gens"],
                escape_cap=resolved["escape_cap"],
                seed=resolved["seed"],
                stream=k,
            )
            rows[k]["mc_freq"] = rep.extinct_fraction
            rows[k]["mc_se"] = rep.se
        diagnostics["mc_replicas"] = resolved["mc"]
    return columns, rows, diagnostics, 0


_COMMANDS = {
    "kernel": cmd_kernel,
    "perron": cmd_perron,
    "quasispecies": cmd_quasispecies,
    "converge": cmd_converge,
    "simulate": cmd_simulate,
    "extinction": cmd_extinction,
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def render_csv(config: dict, columns: list, rows: list, diagnostics: dict) -> str:
    lines = [f"# config.{k}={_fmt(config[k])}" for k in sorted(config)]
    lines += [f"# diagnostics.{k}={_fmt(diagnostics[k])}" for k in sorted(diagnostics)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def render_json(config: dict, columns: list, rows: list, diagnostics: dict) -> str:
    obj = {
        "config": {k: _jsonable(v) for k, v in config.items()},
        "results": [{c: _jsonable(r[c]) for c in columns} for r in rows],
        "diagnostics": {k: _jsonable(v) for k, v in diagnostics.items()},
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        resolved = _resolve(args, _TABLES[args.command])
        columns, rows, diagnostics, code = _COMMANDS[args.command](resolved)
    except AllExtinctError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValueError, ConvergenceError, ResourceLimitError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    diagnostics["duration_s"] = time.perf_counter() - started
    config = {"command": args.command, "version": __version__}
    config.update({k: v for k, v in resolved.items() if v is not None})
    text = (
        render_csv(config, columns, rows, diagnostics)
        if resolved["format"] == "csv"
        else render_json(config, columns, rows, diagnostics)
    )
    if resolved["out"]:
        Path(resolved["out"]).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
