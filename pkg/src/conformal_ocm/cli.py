"""Command-line interface: ``conformal-ocm <subcommand> ...``.

Exit codes: 0 on success, 1 on bad input, 2 on an internal failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .conformal import (
    ClassificationTask,
    ConformalClassifier,
    ConformalRegressor,
    RegressionTask,
    conformal_classify,
    conformal_old_examples,
    conformal_regress_exact,
)
from .core import RealRegion, grid_snap
from .datasets import Dataset, DatasetError, ingest, load_bundled
from .nonconformity import MEASURES, RegressionMeasure, get_measure
from .ocm import FisherPredictor, GaussianLinearPredictor, fisher_interval, gaussian_linear_interval
from .validity import betting_audit, online_eval, permutation_experiment, resampling_study

MODELS = ("exchangeability", "within-label", "gaussian", "fisher")
REPLICATIONS = ("czuber", "iris-class", "iris-reg", "iris-resample")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are input errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# formatting


def _decimals(step: float) -> int:
    return max(0, -math.floor(math.log10(step) + 1e-12))


def _num(v: float, digits: int = 2) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.{digits}f}"


def _region_text(region: RealRegion, digits: int = 2) -> str:
    if region.is_empty:
        return "empty"
    return " U ".join(f"[{_num(a, digits)}, {_num(b, digits)}]" for a, b in region)


def _region_json(region: RealRegion) -> list:
    return [[_jnum(a), _jnum(b)] for a, b in region]


def _jnum(v: float) -> Any:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return round(float(v), 12)


def _lattice_text(region: RealRegion, step: float) -> str:
    if region.is_empty:
        return "none"
    d = _decimals(step)
    runs = []
    for a, b in region:
        if math.isinf(a) or math.isinf(b):
            runs.append(f"{_num(a, d)}..{_num(b, d)}")
        elif a == b:
            runs.append(_num(a, d))
        else:
            runs.append(f"{_num(a, d)}..{_num(b, d)}")
    return ", ".join(runs)


class Report:
    """Ordered records rendered as a table or as JSON lines."""

    def __init__(self, command: str, args: argparse.Namespace) -> None:
        self.records: list[dict] = []
        echo = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command") and v is not None and v is not False}
        self.add("run", command=command, **{k: _jsonable(v) for k, v in echo.items()})

    def add(self, kind: str, **fields: Any) -> None:
        self.records.append({"record": kind, **fields})

    def render(self, fmt: str) -> str:
        if fmt == "json-lines":
            return "".join(json.dumps(r, sort_keys=False) + "\n" for r in self.records)
        lines = []
        for r in self.records:
            kind = r["record"]
            body = "  ".join(f"{k}={_text(v)}" for k, v in r.items() if k != "record")
            lines.append(f"{kind:<12} {body}")
        return "\n".join(lines) + "\n"


def _jsonable(v: Any) -> Any:
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float):
        return _jnum(v)
    return v


def _text(v: Any) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(_text(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_text(x)}" for k, x in v.items()) + "}"
    return str(v)


# --------------------------------------------------------------------------
# helpers


def _load(args, **overrides) -> Dataset:
    if not args.data:
        raise InputError("--data is required")
    return ingest(
        args.data,
        label_column=args.label_column,
        features=args.features.split(",") if getattr(args, "features", None) else None,
        **overrides,
    )


def _epsilons(args) -> list[float]:
    eps = args.epsilon or [0.05]
    for e in eps:
        if not 0.0 < e < 1.0:
            raise InputError(f"--epsilon must lie in (0, 1), got {e}")
    return eps


def _measure(name: str):
    try:
        return get_measure(name)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _split_new(ds: Dataset, args):
    """Old examples and the new object: ``--x`` or the last row held out."""
    if args.x is not None:
        x = [float(v) for v in args.x.split(",")] if args.x else []
        if len(x) != ds.X.shape[1]:
            raise InputError(f"--x has {len(x)} values, dataset has {ds.X.shape[1]} features")
        return ds.X, ds.y, np.array(x), None
    return ds.X[:-1], ds.y[:-1], ds.X[-1], ds.y[-1]


def _grid(args, ds: Dataset | None) -> float | None:
    if args.grid is not None:
        if args.grid <= 0:
            raise InputError("--grid must be positive")
        return args.grid
    return ds.grid_step if ds is not None else None


def _add_regions(report: Report, regions: dict, grid: float | None) -> None:
    for eps, region in regions.items():
        fields: dict = {"epsilon": _jnum(float(eps)), "region": _region_text(region), "intervals": _region_json(region)}
        hull = region.hull()
        if hull is not None and region.gaps():
            fields["hull"] = [_jnum(hull[0]), _jnum(hull[1])]
            fields["gaps"] = [[_jnum(a), _jnum(b)] for a, b in region.gaps()]
        if grid:
            snapped = grid_snap(region, grid)
            fields["grid"] = grid
            fields["snapped"] = _region_text(snapped, _decimals(grid))
            fields["lattice"] = _lattice_text(snapped, grid)
        report.add("region", **fields)


def _ratio(p: Fraction, n: int) -> str:
    """``p`` over the number of examples it counts, e.g. 25/25 rather than 1/1."""
    return f"{p * n}/{n}" if (p * n).denominator == 1 else f"{p.numerator}/{p.denominator}"


def _class_report(report: Report, result, truth=None) -> None:
    for label, p in result.pvalues.items():
        report.add("p-value", label=str(label), p=_ratio(p, result.sizes[label]), value=_jnum(round(float(p), 2)))
    report.add(
        "summary",
        confidence=_jnum(round(float(result.confidence), 4)),
        credibility=_jnum(round(float(result.credibility), 4)),
        **({"actual": str(truth)} if truth is not None else {}),
    )
    for eps, region in result.regions.items():
        report.add("region", epsilon=_jnum(float(eps)), labels=[str(v) for v in region])
    for w in result.report.warnings:
        report.add("warning", message=w)


# --------------------------------------------------------------------------
# subcommands


def cmd_predict_class(args, report: Report) -> None:
    ds = _load(args, label_kind="categorical")
    measure = _measure(args.measure or "knn-ratio")
    model = args.model or "exchangeability"
    if model not in ("exchangeability", "within-label"):
        raise InputError(f"predict-class supports models exchangeability, within-label; got {model!r}")
    X_old, y_old, x_new, truth = _split_new(ds, args)
    task = ClassificationTask(X_old, y_old, x_new, ds.label_space, measure)
    result = conformal_classify(task, _epsilons(args), within_label=model == "within-label")
    _class_report(report, result, truth)


def cmd_predict_reg(args, report: Report) -> None:
    ds = _load(args, label_kind="real")
    measure = _measure(args.measure or "least-squares")
    if not isinstance(measure, RegressionMeasure):
        raise InputError(f"measure {measure.name!r} does not score real labels")
    X_old, y_old, x_new, truth = _split_new(ds, args)
    task = RegressionTask(X_old, y_old, x_new, measure)
    _add_regions(report, conformal_regress_exact(task, _epsilons(args)), _grid(args, ds))
    if truth is not None:
        report.add("summary", actual=_jnum(float(truth)))


def cmd_predict_old(args, report: Report) -> None:
    ds = _load(args, label_kind="real")
    measure = _measure(args.measure or "average")
    regions = conformal_old_examples(ds.y, _epsilons(args), measure)
    _add_regions(report, regions, _grid(args, ds))


def cmd_fisher(args, report: Report) -> None:
    ds = _load(args, label_kind="real")
    values = ds.y
    report.add("summary", n_old=len(values), mean=_jnum(round(float(values.mean()), 4)),
               sd=_jnum(round(float(values.std(ddof=1)), 4)))
    _add_regions(report, {e: fisher_interval(values, e) for e in _epsilons(args)}, _grid(args, ds))


def cmd_gaussian(args, report: Report) -> None:
    ds = _load(args, label_kind="real")
    X_old, y_old, x_new, truth = _split_new(ds, args)
    regions = {e: gaussian_linear_interval(X_old, y_old, x_new, e, intercept=not args.no_intercept)
               for e in _epsilons(args)}
    _add_regions(report, regions, _grid(args, ds))
    if truth is not None:
        report.add("summary", actual=_jnum(float(truth)))


def _predictor(args, ds: Dataset):
    model = args.model or ("exchangeability" if args.measure or ds.label_kind == "categorical" else "fisher")
    if model not in MODELS:
        raise InputError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")
    grid = _grid(args, ds)
    if model == "fisher":
        return FisherPredictor(grid)
    if model == "gaussian":
        return GaussianLinearPredictor(not args.no_intercept, grid)
    if ds.label_kind == "categorical":
        measure = _measure(args.measure or "knn-ratio")
        return ConformalClassifier(measure, ds.label_space, within_label=model == "within-label")
    if model == "within-label":
        raise InputError("the within-label model needs categorical labels")
    measure = _measure(args.measure or "knn-reg")
    if not isinstance(measure, RegressionMeasure):
        raise InputError(f"measure {measure.name!r} does not score real labels")
    return ConformalRegressor(measure, grid)


def _write_curves(path: str, curves: np.ndarray, epsilon: float) -> None:
    with open(path, "w") as fh:
        fh.write("trial,step,cumulative_errors,expected\n")
        for t, row in enumerate(curves):
            for k, c in enumerate(row, start=1):
                fh.write(f"{t},{k},{int(c)},{epsilon * k:.6g}\n")


def cmd_evaluate(args, report: Report) -> None:
    ds = _load(args)
    predictor = _predictor(args, ds)
    for eps in _epsilons(args):
        ledger = online_eval(ds.X, ds.y, predictor, eps)
        if args.format == "json-lines" and args.steps:
            for o in ledger.outcomes:
                report.add("step", epsilon=_jnum(eps), **o.record())
        report.add("ledger", epsilon=_jnum(eps), predictor=predictor.name,
                   error_rate=_jnum(round(ledger.error_rate, 6)), **ledger.aggregates())
        if args.curves:
            _write_curves(args.curves, ledger.cumulative_errors()[None, :], eps)


def cmd_permute(args, report: Report) -> None:
    ds = _load(args)
    predictor = _predictor(args, ds)
    trials = args.trials or 1
    for eps in _epsilons(args):
        result = permutation_experiment(ds.X, ds.y, predictor, eps, trials, args.seed)
        for t, ledger in enumerate(result.ledgers):
            report.add("trial", epsilon=_jnum(eps), trial=t, error_rate=_jnum(round(ledger.error_rate, 6)),
                       errors=int(ledger.errors.sum()))
        report.add("summary", epsilon=_jnum(eps), predictor=predictor.name, trials=trials,
                   mean_error_rate=_jnum(round(result.mean_error_rate, 6)))
        if args.curves:
            _write_curves(args.curves, result.curves(), eps)


def cmd_bet_audit(args, report: Report) -> None:
    ds = _load(args, label_kind="real")
    e = ds.y
    if not np.all((e == 0) | (e == 1)):
        raise InputError("the error column must contain only 0 and 1")
    for eps in _epsilons(args):
        try:
            traj = betting_audit(e.astype(bool), eps)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        fields = dict(epsilon=_jnum(eps), N=traj.N, frequency=_jnum(round(traj.frequency, 6)),
                      final_capital=_jnum(round(traj.final_capital, 6)),
                      min_capital=_jnum(round(float(traj.capital.min()), 6)),
                      bound_holds=bool(traj.bound_holds().all()))
        if args.delta is not None:
            fields["delta"] = args.delta
            fields["frequency_bound_holds"] = traj.frequency_bound_holds(args.delta)
        report.add("audit", **fields)
        if args.curves:
            with open(args.curves, "w") as fh:
                fh.write("n,capital,stake\n")
                for n in range(traj.N, -1, -1):
                    stake = traj.stakes[n - 1] if n else 0.0
                    fh.write(f"{n},{traj.capital[n]:.12g},{stake:.12g}\n")


def _replicate_czuber(report: Report, eps: float) -> None:
    ds = load_bundled("czuber.csv")
    fisher = fisher_interval(ds.y, eps)
    report.add("fisher", epsilon=eps, region=_region_text(fisher), lattice=_lattice_text(grid_snap(fisher, 1), 1))
    conf = conformal_old_examples(ds.y, [eps])[eps]
    report.add("conformal", epsilon=eps, region=_region_text(conf, 4), lattice=_lattice_text(grid_snap(conf, 1), 1))


def _replicate_iris_class(report: Report) -> None:
    ds = load_bundled("iris25.csv")
    for name in ("knn-ratio", "label-mean", "band"):
        task = ClassificationTask(ds.X[:-1], ds.y[:-1], ds.X[-1], ds.label_space, name)
        result = conformal_classify(task, [0.08, 0.05, Fraction(1, 3)])
        ps = {str(k): _ratio(v, result.sizes[k]) for k, v in result.pvalues.items()}
        regions = {str(_jnum(float(k))): [str(v) for v in r] for k, r in result.regions.items()}
        report.add("classification", measure=name, pvalues=ps,
                   confidence=_jnum(round(float(result.confidence), 4)),
                   credibility=_jnum(round(float(result.credibility), 4)), regions=regions)


def _replicate_iris_reg(report: Report) -> None:
    ds = load_bundled("iris25.csv", label_column="petal")
    X_old, y_old, x_new = ds.X[:-1], ds.y[:-1], ds.X[-1]
    for eps in (0.04, 0.08):
        rows = {
            "textbook": gaussian_linear_interval(X_old, y_old, x_new, eps, intercept=True),
            "nn-conformal": conformal_regress_exact(RegressionTask(X_old, y_old, x_new, "knn-reg"), [eps])[eps],
            "ls-conformal": conformal_regress_exact(RegressionTask(X_old, y_old, x_new, "least-squares"), [eps])[eps],
        }
        for method, region in rows.items():
            report.add("interval", level=f"{round(100 * (1 - eps))}%", method=method,
                       continuous=_region_text(region, 3), snapped=_region_text(grid_snap(region, 0.1), 1))


def _replicate_resample(args, report: Report) -> None:
    if not args.data:
        raise InputError("iris-resample needs --data with 100 setosa/versicolor rows")
    ds = _load(args, label_kind="categorical")
    if len(ds.label_space) != 2:
        raise InputError(f"iris-resample needs exactly two species, got {list(ds.label_space)}")
    predictors = {name: ConformalClassifier(name, ds.label_space) for name in ("knn-ratio", "label-mean", "band")}
    eps = (args.epsilon or [0.08])[0]
    study = resampling_study(ds.X, ds.y, predictors, eps, args.trials or 1000, 25, args.seed or 0)
    for name, agg in study.items():
        report.add("resampling", measure=name, **agg)


def cmd_replicate(args, report: Report) -> None:
    which = args.which
    if which == "czuber":
        _replicate_czuber(report, 0.05)
    elif which == "iris-class":
        _replicate_iris_class(report)
    elif which == "iris-reg":
        _replicate_iris_reg(report)
    else:
        _replicate_resample(args, report)


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conformal-ocm", description="Conformal prediction regions and validity audits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--data", help="CSV file (bundled fixtures: czuber.csv, czuber20.csv, iris25.csv)")
        p.add_argument("--label-column", help="label column (default: sidecar or last column)")
        p.add_argument("--features", help="comma-separated feature columns")
        p.add_argument("--epsilon", type=float, action="append", help="significance level; repeatable")
        p.add_argument("--grid", type=float, help="measurement grid step for snapping intervals")
        p.add_argument("--measure", help=f"nonconformity measure: {', '.join(MEASURES)}")
        p.add_argument("--model", help=f"compression model: {', '.join(MODELS)}")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--format", choices=("table", "json-lines"), default="table")
        p.add_argument("--x", help="new object as comma-separated values (default: hold out the last row)")
        p.add_argument("--no-intercept", action="store_true", help="Gaussian model without a constant column")
        p.add_argument("--curves", help="write cumulative-error (or capital) curves to this CSV file")

    commands = {
        "predict-class": (cmd_predict_class, "p-values and label regions for a new object"),
        "predict-reg": (cmd_predict_reg, "exact conformal intervals for a real label"),
        "predict-old": (cmd_predict_old, "conformal intervals for the next number of a sequence"),
        "fisher": (cmd_fisher, "normal-theory interval for the next number of a sequence"),
        "gaussian": (cmd_gaussian, "least-squares t-interval for a new object"),
        "evaluate": (cmd_evaluate, "on-line evaluation ledger"),
        "permute": (cmd_permute, "on-line evaluation over seeded shuffles"),
        "bet-audit": (cmd_bet_audit, "betting audit of a 0/1 error sequence"),
        "replicate": (cmd_replicate, "worked examples end to end"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        if name == "replicate":
            p.add_argument("which", choices=REPLICATIONS)
        common(p)
        if name == "evaluate":
            p.add_argument("--steps", action="store_true", help="with json-lines, emit one record per step")
        if name == "bet-audit":
            p.add_argument("--delta", type=float, help="check the capital bound for frequency epsilon + delta")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    report = Report(args.command, args)
    try:
        args.func(args, report)
    except (InputError, DatasetError, FileNotFoundError) as exc:
        print(f"conformal-ocm: input error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # precondition failures on user data (rank deficiency, too few rows)
        print(f"conformal-ocm: input error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - reported, not raised
        print(f"conformal-ocm: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.render(args.format))
    return 0


if __name__ == "__main__":
    sys.exit(main())
