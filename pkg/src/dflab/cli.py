"""Command line front end for the df experiments.

Subcommands rebuild the study tables (``splines-table``, ``tree-table``,
``lasso-path``, ``mars correct|check|r2study|fit-csv``) and run the
generic covariance df estimator on user CSV data (``df``). Runs are
deterministic given the effective config; every CSV starts with a '#'
comment carrying that config so the file documents its own rerun.

Precedence: command-line flags beat the optional ``--config`` file
(flat ``key=value`` lines, keys spelled like the flags), which beats the
built-in defaults. Exit codes: 0 success, 2 invalid config or input,
3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass

import numpy as np

from .adaptive import (
    BestSubsetProcedure,
    LassoMmProcedure,
    RelaxedLassoProcedure,
    gcv_path_lasso,
    simulate_sparse_gaussian,
)
from .core import (
    DflabError,
    InvalidInputError,
    read_dataset_csv,
)
from .empirical import DfExperiment, estimate_df, experiment_record
from .mars import (
    MarsProcedure,
    backward_pass,
    correct_penalty,
    cv_penalty,
    forward_pass,
    model_record,
    r2_study,
    self_consistency_check,
)
from .smoothers import ConstantProcedure, KnnProcedure, OlsProcedure, RidgeProcedure
from .splines import MonotoneSplineProcedure, SplineProcedure, spline_df_table
from .tree import TreeProcedure, tree_df_table

__all__ = ["main", "build_parser"]

_LASSO_GRID = tuple(
    round(float(v), 6) for v in np.geomspace(0.5, 500.0, 20)
)


@dataclass(frozen=True)
class _Knob:
    """One configurable setting: flag spelling, value kind, default."""

    name: str
    kind: str
    default: object
    help: str

    @property
    def dest(self) -> str:
        if self.name == "lambda":
            return "lam"
        return self.name.replace("-", "_")


def _convert(kind: str, text: str):
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "str":
        return text
    if kind == "ints":
        return tuple(int(t) for t in text.split(",") if t.strip())
    if kind == "floats":
        return tuple(float(t) for t in text.split(",") if t.strip())
    if kind.startswith("choice:"):
        allowed = kind.split(":", 1)[1].split("|")
        if text not in allowed:
            raise ValueError(f"must be one of {', '.join(allowed)}")
        return text
    raise AssertionError(f"unknown knob kind {kind!r}")


_COMMON = [
    _Knob("seed", "int", 0, "master RNG seed"),
    _Knob("threads", "int", 1, "worker threads for Monte Carlo fits"),
    _Knob("out", "str", None, "output path (default depends on the subcommand)"),
]
_FORMAT = _Knob("format", "choice:csv|json", "csv", "table output format")

_KNOBS: dict[str, list[_Knob]] = {
    "splines-table": _COMMON + [
        _FORMAT,
        _Knob("n", "int", 100, "sample size"),
        _Knob("m", "int", 100, "response draws per covariance estimate"),
        _Knob("reps", "int", 100, "Monte Carlo replications"),
        _Knob("j-grid", "ints", (5, 10, 15), "basis dimensions for unpenalized fits"),
        _Knob("lambda-grid", "floats", (0.001, 0.01, 0.1),
              "penalties for smoothing fits"),
    ],
    "tree-table": _COMMON + [
        _FORMAT,
        _Knob("n", "int", 100, "sample size"),
        _Knob("m", "int", 100, "response draws per covariance estimate"),
        _Knob("reps", "int", 10, "Monte Carlo replications"),
        _Knob("depths", "ints", (0, 1, 2, 3, 4), "tree depths"),
        _Knob("p-values", "ints", (1, 5, 10), "predictor counts"),
    ],
    "lasso-path": _COMMON + [
        _FORMAT,
        _Knob("n", "int", 100, "sample size"),
        _Knob("p", "int", 20, "predictor count"),
        _Knob("n-true", "int", 3, "number of unit true coefficients"),
        _Knob("lambda-grid", "floats", _LASSO_GRID, "penalty grid"),
    ],
    "mars:correct": _COMMON + [
        _Knob("n", "int", 100, "sample size"),
        _Knob("p", "int", 1, "predictor count"),
        _Knob("degree", "int", 1, "maximum interaction degree"),
        _Knob("nk", "int", 21, "forward-pass term budget"),
        _Knob("m", "int", 100, "response draws per covariance estimate"),
        _Knob("reps", "int", 3, "Monte Carlo replications"),
        _Knob("knot-stride", "int", 1, "evaluate every k-th candidate knot"),
    ],
    "mars:check": _COMMON + [
        _FORMAT,
        _Knob("n", "int", 100, "sample size"),
        _Knob("p", "int", 1, "predictor count"),
        _Knob("degree", "int", 1, "maximum interaction degree"),
        _Knob("nk-grid", "ints", (2, 5, 10, 20, 30, 40), "term budgets to sweep"),
        _Knob("c", "float", None, "fixed penalty factor (default: recalibrate per nk)"),
        _Knob("m", "int", 100, "response draws per covariance estimate"),
        _Knob("reps", "int", 3, "Monte Carlo replications"),
        _Knob("knot-stride", "int", 1, "evaluate every k-th candidate knot"),
    ],
    "mars:r2study": _COMMON + [
        _FORMAT,
        _Knob("n", "int", 200, "training sample size"),
        _Knob("p-grid", "ints", (2, 5, 10, 20), "predictor counts"),
        _Knob("degree", "int", 2, "maximum interaction degree"),
        _Knob("nk", "int", 21, "forward-pass term budget"),
        _Knob("reps", "int", 10, "train/test replications"),
        _Knob("c-grid", "floats", (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0),
              "candidate penalty factors for CV"),
        _Knob("folds", "int", 10, "cross-validation folds"),
        _Knob("m", "int", 100, "response draws per covariance estimate"),
        _Knob("correction-reps", "int", 3, "replications for the penalty correction"),
        _Knob("knot-stride", "int", 1, "evaluate every k-th candidate knot"),
    ],
    "mars:fit-csv": _COMMON + [
        _Knob("data", "str", None, "input CSV (columns x1..xp and y)"),
        _Knob("c-mode", "choice:default|corrected|cv", "default",
              "how the GCV penalty factor is chosen"),
        _Knob("c", "float", None, "explicit penalty factor (overrides c-mode)"),
        _Knob("degree", "int", 1, "maximum interaction degree"),
        _Knob("nk", "int", 21, "forward-pass term budget"),
        _Knob("m", "int", 100, "response draws (c-mode corrected)"),
        _Knob("reps", "int", 3, "replications (c-mode corrected)"),
        _Knob("c-grid", "floats", (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0),
              "candidate penalty factors (c-mode cv)"),
        _Knob("folds", "int", 10, "cross-validation folds (c-mode cv)"),
        _Knob("knot-stride", "int", 1, "evaluate every k-th candidate knot"),
    ],
    "df": _COMMON + [
        _Knob("data", "str", None, "input CSV (columns x1..xp and y)"),
        _Knob("procedure",
              "choice:constant|ols|ridge|knn|spline|monotone-spline|tree|"
              "lasso|relaxed-lasso|best-subset|mars",
              "ols", "fitting procedure to measure"),
        _Knob("lambda", "float", None,
              "penalty (ridge/lasso/splines; subset size bound for best-subset)"),
        _Knob("k", "int", 5, "neighbor count (knn)"),
        _Knob("j", "int", None, "basis dimension (splines)"),
        _Knob("depth", "int", 2, "maximum depth (tree)"),
        _Knob("nk", "int", 21, "forward-pass term budget (mars)"),
        _Knob("degree", "int", 1, "maximum interaction degree (mars)"),
        _Knob("c", "float", None, "GCV penalty factor (mars)"),
        _Knob("m", "int", 100, "response draws per covariance estimate"),
        _Knob("reps", "int", 100, "Monte Carlo replications"),
        _Knob("knot-stride", "int", 1, "evaluate every k-th candidate knot (mars)"),
    ],
}

_DEFAULT_OUT = {
    "splines-table": "splines_table.csv",
    "tree-table": "tree_table.csv",
    "lasso-path": "lasso_path.csv",
    "mars:correct": "mars_correct.json",
    "mars:check": "mars_check.csv",
    "mars:r2study": "mars_r2study.csv",
    "mars:fit-csv": "mars_fit.json",
    "df": "df.json",
}


def _registry_key(subcommand: str, subaction: str | None = None) -> str:
    return f"{subcommand}:{subaction}" if subcommand == "mars" else subcommand


def _add_knobs(parser: argparse.ArgumentParser, knobs: list[_Knob]) -> None:
    for knob in knobs:
        parser.add_argument(f"--{knob.name}", dest=knob.dest, default=None,
                            metavar="V", help=knob.help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dflab",
        description="Monte Carlo degrees-of-freedom experiments.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("splines-table", "tree-table", "lasso-path", "df"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, metavar="FILE",
                       help="key=value config file")
        _add_knobs(p, _KNOBS[name])
    mars = sub.add_parser("mars")
    mars.add_argument("subaction", choices=["correct", "check", "r2study", "fit-csv"])
    mars.add_argument("--config", default=None, metavar="FILE",
                      help="key=value config file")
    seen: dict[str, _Knob] = {}
    for key in ("mars:correct", "mars:check", "mars:r2study", "mars:fit-csv"):
        for knob in _KNOBS[key]:
            seen.setdefault(knob.name, knob)
    _add_knobs(mars, list(seen.values()))
    return parser


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise InvalidInputError(
                    f"{path}: line {lineno}: expected key=value"
                )
            values[key.strip()] = value.strip()
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flags, config file, and defaults into one plain dict."""
    key = _registry_key(args.subcommand, getattr(args, "subaction", None))
    knobs = _KNOBS[key]
    file_values = _load_config_file(args.config) if args.config else {}
    known = {k.name for k in knobs}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise InvalidInputError(
            f"config file: unknown keys for {key}: {', '.join(unknown)}"
        )
    config: dict = {"subcommand": args.subcommand}
    if args.subcommand == "mars":
        config["subaction"] = args.subaction
    for knob in knobs:
        raw = getattr(args, knob.dest, None)
        if raw is None:
            raw = file_values.get(knob.name)
        if raw is None:
            config[knob.dest] = knob.default
            continue
        try:
            config[knob.dest] = _convert(knob.kind, raw)
        except ValueError as exc:
            raise InvalidInputError(
                f"invalid value for --{knob.name}: {raw!r} ({exc})"
            ) from None
    for field in ("n", "m", "reps", "threads", "folds"):
        if field in config and config[field] is not None and config[field] < 1:
            raise InvalidInputError(f"--{field} must be >= 1")
    if config["out"] is None:
        config["out"] = _DEFAULT_OUT[key]
    return config


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _header_line(config: dict) -> str:
    parts = []
    for key in sorted(config):
        value = config[key]
        if value is None:
            continue
        name = "lambda" if key == "lam" else key.replace("_", "-")
        parts.append(f"{name}={_fmt(value)}")
    return "# " + " ".join(parts)


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def _write_rows(config: dict, columns: list[str], rows: list[dict]) -> None:
    path = config["out"]
    if config.get("format", "csv") == "json":
        payload = {
            "config": {k: _jsonable(v) for k, v in config.items()},
            "rows": [{c: r.get(c) for c in columns} for r in rows],
        }
        _write_json(path, payload)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_header_line(config) + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
    print(f"wrote {path}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")


def _record_payload(config: dict, result: dict) -> dict:
    return {"config": {k: _jsonable(v) for k, v in config.items()},
            "result": result}


def cmd_splines_table(config: dict) -> None:
    rows = spline_df_table(J_grid=config["j_grid"], lam_grid=config["lambda_grid"],
                           n=config["n"], m=config["m"], reps=config["reps"],
                           seed=config["seed"], threads=config["threads"])
    _write_rows(config, ["method", "parameter", "theoretical", "empirical", "se"],
                rows)


def cmd_tree_table(config: dict) -> None:
    rows = tree_df_table(depths=config["depths"], p_values=config["p_values"],
                         n=config["n"], m=config["m"], reps=config["reps"],
                         seed=config["seed"], threads=config["threads"])
    _write_rows(config, ["depth", "M", "p", "df_hat", "se", "msdf"], rows)


def cmd_lasso_path(config: dict) -> None:
    data, _, _ = simulate_sparse_gaussian(config["n"], config["p"],
                                          n_true=config["n_true"],
                                          seed=config["seed"])
    rows = gcv_path_lasso(data, config["lambda_grid"])
    _write_rows(config, ["lambda", "n_active", "trace_s", "delta",
                         "df_theorem", "gcv_count", "gcv_trace"], rows)


def _mars_correct(config: dict) -> None:
    res = correct_penalty(n=config["n"], p=config["p"], degree=config["degree"],
                          nk=config["nk"], m=config["m"], seed=config["seed"],
                          reps=config["reps"], threads=config["threads"],
                          knot_stride=config["knot_stride"])
    record = {
        "c_default": res.c_default,
        "c_corrected": res.c_corrected,
        "df_hat": res.df_hat.to_record(),
        "r": res.r,
        "r_counts": {str(k): int(v) for k, v in sorted(res.r_counts.items())},
    }
    _write_json(config["out"], _record_payload(config, record))


def _mars_check(config: dict) -> None:
    rows = self_consistency_check(n=config["n"], p=config["p"],
                                  degree=config["degree"],
                                  nk_grid=config["nk_grid"], c=config["c"],
                                  m=config["m"], seed=config["seed"],
                                  reps=config["reps"], threads=config["threads"],
                                  knot_stride=config["knot_stride"])
    _write_rows(config, ["nk", "nominal_df", "empirical_df", "c", "se_empirical"],
                rows)
    if len(rows) >= 2:
        x = np.array([r["empirical_df"] for r in rows])
        y = np.array([r["nominal_df"] for r in rows])
        slope, intercept = np.polyfit(x, y, 1)
        print(f"nominal-vs-empirical fit: slope={slope:.3f} "
              f"intercept={intercept:.3f} points={len(rows)}")
    else:
        print("nominal-vs-empirical fit: not enough points for a slope")


def _mars_r2study(config: dict) -> None:
    rows = r2_study(p_grid=config["p_grid"], degree=config["degree"],
                    reps=config["reps"], seed=config["seed"], n=config["n"],
                    nk=config["nk"], c_grid=config["c_grid"], m=config["m"],
                    correction_reps=config["correction_reps"],
                    folds=config["folds"], threads=config["threads"],
                    knot_stride=config["knot_stride"])
    _write_rows(config, ["p", "variant", "mean_r2", "se", "c_used"], rows)


def _mars_fit_csv(config: dict) -> None:
    if not config["data"]:
        raise InvalidInputError("mars fit-csv requires --data")
    data = read_dataset_csv(config["data"])
    if config["c"] is not None:
        c_used, c_source = float(config["c"]), "explicit"
    elif config["c_mode"] == "corrected":
        res = correct_penalty(n=data.n, p=data.p, degree=config["degree"],
                              nk=config["nk"], m=config["m"],
                              seed=config["seed"], reps=config["reps"],
                              threads=config["threads"],
                              knot_stride=config["knot_stride"])
        c_used, c_source = res.c_corrected, "corrected"
    elif config["c_mode"] == "cv":
        c_used = cv_penalty(data, degree=config["degree"], nk=config["nk"],
                            c_grid=config["c_grid"], folds=config["folds"],
                            seed=config["seed"],
                            knot_stride=config["knot_stride"])
        c_source = "cv"
    else:
        c_used, c_source = None, "default"
    model = backward_pass(
        forward_pass(data, nk=config["nk"], degree=config["degree"],
                     knot_stride=config["knot_stride"]),
        c=c_used,
    )
    record = model_record(model)
    record["c_source"] = c_source
    _write_json(config["out"], _record_payload(config, record))


def cmd_mars(config: dict) -> None:
    handler = {
        "correct": _mars_correct,
        "check": _mars_check,
        "r2study": _mars_r2study,
        "fit-csv": _mars_fit_csv,
    }[config["subaction"]]
    handler(config)


def _build_procedure(config: dict):
    name = config["procedure"]
    lam = config["lam"]
    if name == "constant":
        return ConstantProcedure()
    if name == "ols":
        return OlsProcedure()
    if name == "ridge":
        return RidgeProcedure(lam=1.0 if lam is None else lam)
    if name == "knn":
        return KnnProcedure(k=config["k"])
    if name == "spline":
        return SplineProcedure(J=config["j"], lam=0.0 if lam is None else lam)
    if name == "monotone-spline":
        return MonotoneSplineProcedure(J=config["j"],
                                       lam=0.0 if lam is None else lam)
    if name == "tree":
        return TreeProcedure(depth=config["depth"])
    if name == "lasso":
        return LassoMmProcedure(lam=1.0 if lam is None else lam)
    if name == "relaxed-lasso":
        return RelaxedLassoProcedure(lam=1.0 if lam is None else lam)
    if name == "best-subset":
        return BestSubsetProcedure(lam0=2.0 if lam is None else lam)
    if name == "mars":
        return MarsProcedure(nk=config["nk"], degree=config["degree"],
                             c=config["c"], knot_stride=config["knot_stride"])
    raise InvalidInputError(f"unknown procedure {name!r}")


def cmd_df(config: dict) -> None:
    if not config["data"]:
        raise InvalidInputError("df requires --data")
    data = read_dataset_csv(config["data"])
    procedure = _build_procedure(config)
    preliminary = procedure.fit(data)
    exp = DfExperiment(procedure=procedure, n=data.n, p=data.p,
                       mu=preliminary.fitted, X=data.X, m=config["m"],
                       reps=config["reps"], seed=config["seed"])
    est = estimate_df(exp, threads=config["threads"])
    record = experiment_record(exp, est)
    record["mu_source"] = "preliminary fit on the input data"
    _write_json(config["out"], _record_payload(config, record))


_HANDLERS = {
    "splines-table": cmd_splines_table,
    "tree-table": cmd_tree_table,
    "lasso-path": cmd_lasso_path,
    "mars": cmd_mars,
    "df": cmd_df,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        _HANDLERS[config["subcommand"]](config)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DflabError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
