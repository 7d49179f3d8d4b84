"""Command line front end: fit curves, select guide families, run studies.

Every command is a thin wrapper: it parses inputs, calls the library, and
formats output. Numerical work happens in the library modules only.

Exit codes: 0 success; 2 input error (unreadable or malformed CSV, bad
config, bad model expression, covariates outside [0, 1]); 3 model constraint
violated (rank-deficient design, positivity guard with gamma = 1); 4
numerical failure (no usable GCV candidate, degenerate bandwidths,
non-finite results).
"""

import argparse
import importlib.resources
import json
import os
import sys

import numpy as np

from .exceptions import (
    BandwidthError,
    DegenerateFitError,
    DomainError,
    PositivityError,
    RankDeficiencyError,
    SelectionError,
)
from .selection import count_criteria
from .semiparametric import SemiparametricSplineEstimator
from .simulate import (
    ARM_KINDS,
    ArmSpec,
    SelectionSpec,
    StudySpec,
    run_study,
    write_reports,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MODEL = 3
EXIT_NUMERIC = 4


class _InputError(Exception):
    """User-facing input problem; maps to exit code 2."""


def read_xy_csv(path):
    """Load a two-column x,y CSV, reporting problems by line number."""
    import csv

    try:
        handle = open(path, newline="")
    except OSError as err:
        raise _InputError(f"cannot read {path}: {err.strerror or err}") from None
    xs, ys = [], []
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise _InputError(f"{path}: file is empty")
        if [col.strip() for col in header] != ["x", "y"]:
            raise _InputError(
                f"{path} line 1: expected header 'x,y', got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise _InputError(
                    f"{path} line {lineno}: expected 2 columns, got {len(row)}"
                )
            try:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
            except ValueError:
                raise _InputError(
                    f"{path} line {lineno}: non-numeric value in {row!r}"
                ) from None
    if not xs:
        raise _InputError(f"{path}: no data rows after the header")
    return np.asarray(xs), np.asarray(ys)


def format_fit_csv(grid, fitted, lower=None, upper=None):
    """Render prediction columns as CSV text (full precision)."""
    has_ci = lower is not None
    lines = ["x,fhat,lo,hi" if has_ci else "x,fhat"]
    for i in range(len(grid)):
        row = f"{float(grid[i])!r},{float(fitted[i])!r}"
        if has_ci:
            row += f",{float(lower[i])!r},{float(upper[i])!r}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _write_text(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as handle:
            handle.write(text)


def _gcv_or_int(text):
    return "gcv" if text == "gcv" else int(text)


def _gcv_or_float(text):
    return "gcv" if text == "gcv" else float(text)


def cmd_fit(args):
    x, y = read_xy_csv(args.data)
    estimator = SemiparametricSplineEstimator(
        model=args.model if args.example is None else _library_model(args),
        gamma=args.gamma,
        degree=args.degree,
        segments=args.segments,
        penalty_order=args.penalty_order,
        lam=args.lam,
    )
    estimator.fit(x, y)
    grid = np.linspace(0.0, 1.0, args.grid_points)
    fitted = estimator.predict(grid)
    lower = upper = None
    if args.ci_level is not None:
        lower, upper = estimator.confidence_interval(grid, level=args.ci_level)
    values = [fitted] + ([lower, upper] if lower is not None else [])
    if not all(np.all(np.isfinite(v)) for v in values):
        raise FloatingPointError("fit produced non-finite predictions")
    _write_text(format_fit_csv(grid, fitted, lower, upper), args.out)
    return EXIT_OK


def _library_model(args):
    from .parametric import resolve_family

    return resolve_family(args.model, example=args.example)


def cmd_select(args):
    x, y = read_xy_csv(args.data)
    candidates = [c.strip() for c in args.candidates.split(",") if c.strip()]
    if not candidates:
        raise _InputError("--candidates is empty")
    if len(set(candidates)) != len(candidates):
        raise _InputError(f"duplicate candidate names in {args.candidates!r}")
    report = count_criteria(
        x,
        y,
        candidates,
        gamma=args.gamma,
        degree=args.degree,
        penalty_order=args.penalty_order,
        grid_size=args.grid_points,
        example=args.example,
    )
    if args.out:
        report.to_csv(args.out)
    header = f"{'model':<12} {'C_a':>5} {'C_lam':>6} {'C_both':>7} {'AIC':>10} {'TIC':>10}"
    print(header)
    for cand in report.candidates:
        if cand.usable:
            print(
                f"{cand.name:<12} {cand.c_a:>5} {cand.c_lambda:>6} "
                f"{cand.c_both:>7} {cand.aic:>10.3f} {cand.tic:>10.3f}"
            )
        else:
            print(f"{cand.name:<12} failed: {cand.failure}")
    print(report.winner("c_both"))
    return EXIT_OK


def bundled_study(name):
    """Path of a study file shipped with the package (e.g. 'example1')."""
    resource = importlib.resources.files("spsreg") / "studies" / f"{name}.toml"
    return resource


def _load_study_file(path):
    if os.path.exists(path):
        with open(path, "rb") as handle:
            raw = handle.read()
        suffix = os.path.splitext(path)[1].lower()
    else:
        resource = bundled_study(path)
        if resource.is_file():
            raw = resource.read_bytes()
            suffix = ".toml"
        else:
            raise _InputError(f"study file {path} does not exist")
    if suffix == ".json":
        try:
            return json.loads(raw.decode())
        except json.JSONDecodeError as err:
            raise _InputError(f"{path}: invalid JSON ({err})") from None
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(raw.decode())
    except tomllib.TOMLDecodeError as err:
        raise _InputError(f"{path}: invalid TOML ({err})") from None


_STUDY_KEYS = {
    "example",
    "n",
    "reps",
    "seed",
    "grid_size",
    "fixed_design",
    "segment_grid",
    "lambda_grid",
}
_ARM_KEYS = {
    "kind",
    "model",
    "gamma",
    "degree",
    "penalty_order",
    "segments",
    "lam",
    "kernel",
    "bandwidth",
    "label",
}
_SELECTION_KEYS = {"candidates", "gamma", "degree", "penalty_order", "grid_points"}


def _expect_int(table, key, errors, where, lo=None, hi=None, default=None):
    if key not in table:
        if default is not None:
            return default
        errors.append(f"{where}: missing required key '{key}'")
        return None
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append(f"{where}: '{key}' must be an integer, got {value!r}")
        return None
    if lo is not None and value < lo:
        errors.append(f"{where}: '{key}' must be >= {lo}, got {value}")
        return None
    if hi is not None and value > hi:
        errors.append(f"{where}: '{key}' must be <= {hi}, got {value}")
        return None
    return value


def parse_study_config(data):
    """Validate a study dictionary exhaustively.

    Returns (StudySpec or None, list of violation strings). Every violation
    found is reported, not just the first.
    """
    errors = []
    if not isinstance(data, dict):
        return None, ["top level must be a table of study/arms/selection"]
    unknown = set(data) - {"study", "arms", "selection"}
    for key in sorted(unknown):
        errors.append(f"unknown top-level section '{key}'")

    study = data.get("study")
    if not isinstance(study, dict):
        errors.append("missing [study] section")
        study = {}
    for key in sorted(set(study) - _STUDY_KEYS):
        errors.append(f"[study]: unknown key '{key}'")
    example = _expect_int(study, "example", errors, "[study]", lo=1, hi=4)
    n = _expect_int(study, "n", errors, "[study]", lo=2)
    reps = _expect_int(study, "reps", errors, "[study]", lo=1)
    seed = _expect_int(study, "seed", errors, "[study]")
    grid_size = _expect_int(study, "grid_size", errors, "[study]", lo=1, default=100)
    fixed_design = study.get("fixed_design", False)
    if not isinstance(fixed_design, bool):
        errors.append("[study]: 'fixed_design' must be a boolean")
        fixed_design = False
    segment_grid = study.get("segment_grid")
    if segment_grid is not None and (
        not isinstance(segment_grid, list)
        or not all(isinstance(v, int) and v >= 1 for v in segment_grid)
    ):
        errors.append("[study]: 'segment_grid' must be a list of integers >= 1")
        segment_grid = None
    lambda_grid = study.get("lambda_grid")
    if lambda_grid is not None and (
        not isinstance(lambda_grid, list)
        or not all(isinstance(v, (int, float)) and v >= 0 for v in lambda_grid)
    ):
        errors.append("[study]: 'lambda_grid' must be a list of numbers >= 0")
        lambda_grid = None

    arm_specs = []
    arms = data.get("arms", [])
    if not isinstance(arms, list):
        errors.append("[[arms]] must be an array of tables")
        arms = []
    for idx, arm in enumerate(arms):
        where = f"arms[{idx}]"
        if not isinstance(arm, dict):
            errors.append(f"{where}: must be a table")
            continue
        for key in sorted(set(arm) - _ARM_KEYS):
            errors.append(f"{where}: unknown key '{key}'")
        kind = arm.get("kind")
        if kind not in ARM_KINDS:
            errors.append(
                f"{where}: 'kind' must be one of {sorted(ARM_KINDS)}, got {kind!r}"
            )
            continue
        fields = {"kind": kind}
        if "model" in arm:
            if not isinstance(arm["model"], str):
                errors.append(f"{where}: 'model' must be a string")
                continue
            fields["model"] = arm["model"]
        gamma = arm.get("gamma", 0)
        if gamma not in (0, 1):
            errors.append(f"{where}: 'gamma' must be 0 or 1, got {gamma!r}")
            continue
        fields["gamma"] = gamma
        degree = _expect_int(arm, "degree", errors, where, lo=0, default=1)
        porder = _expect_int(arm, "penalty_order", errors, where, lo=1, default=2)
        if degree is None or porder is None:
            continue
        fields["degree"] = degree
        fields["penalty_order"] = porder
        for key, caster in (("segments", int), ("lam", float)):
            if key in arm:
                value = arm[key]
                if value == "gcv":
                    fields[key] = "gcv"
                elif isinstance(value, (int, float)) and not isinstance(value, bool):
                    fields[key] = caster(value)
                else:
                    errors.append(f"{where}: '{key}' must be a number or 'gcv'")
        if "kernel" in arm:
            if arm["kernel"] not in ("gaussian", "epanechnikov"):
                errors.append(f"{where}: unknown kernel {arm['kernel']!r}")
            else:
                fields["kernel"] = arm["kernel"]
        if "bandwidth" in arm:
            value = arm["bandwidth"]
            if value == "cv":
                fields["bandwidth"] = "cv"
            elif isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0:
                fields["bandwidth"] = float(value)
            else:
                errors.append(f"{where}: 'bandwidth' must be positive or 'cv'")
        if "label" in arm:
            fields["label"] = str(arm["label"])
        try:
            arm_specs.append(ArmSpec(**fields))
        except ValueError as err:
            errors.append(f"{where}: {err}")

    selection = None
    if "selection" in data:
        block = data["selection"]
        if not isinstance(block, dict):
            errors.append("[selection] must be a table")
        else:
            for key in sorted(set(block) - _SELECTION_KEYS):
                errors.append(f"[selection]: unknown key '{key}'")
            candidates = block.get("candidates")
            if (
                not isinstance(candidates, list)
                or not candidates
                or not all(isinstance(c, str) for c in candidates)
            ):
                errors.append("[selection]: 'candidates' must be a non-empty list of strings")
            elif len(set(candidates)) != len(candidates):
                errors.append("[selection]: duplicate candidate names")
            else:
                gamma = block.get("gamma", 0)
                if gamma not in (0, 1):
                    errors.append(f"[selection]: 'gamma' must be 0 or 1, got {gamma!r}")
                    gamma = 0
                degree = _expect_int(block, "degree", errors, "[selection]", lo=0, default=1)
                porder = _expect_int(
                    block, "penalty_order", errors, "[selection]", lo=1, default=2
                )
                grid_points = _expect_int(
                    block, "grid_points", errors, "[selection]", lo=1, default=100
                )
                if None not in (degree, porder, grid_points):
                    selection = SelectionSpec(
                        candidates=tuple(candidates),
                        gamma=gamma,
                        degree=degree,
                        penalty_order=porder,
                        grid_size=grid_points,
                    )

    if not arm_specs and selection is None:
        errors.append("study needs at least one [[arms]] entry or a [selection] block")
    if errors:
        return None, errors
    spec = StudySpec(
        truth=example,
        n=n,
        reps=reps,
        seed=seed,
        arms=tuple(arm_specs),
        selection=selection,
        grid_size=grid_size,
        fixed_design=fixed_design,
        segment_grid=tuple(segment_grid) if segment_grid else None,
        lambda_grid=tuple(lambda_grid) if lambda_grid else None,
    )
    return spec, []


def cmd_simulate(args):
    data = _load_study_file(args.study)
    spec, errors = parse_study_config(data)
    if errors:
        for line in errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_INPUT
    result = run_study(spec, n_jobs=args.threads)
    written = write_reports(result, args.out)
    for arm in result.arms:
        mise = "nan" if arm.reps_used == 0 else f"{1000.0 * arm.mise:.3f}"
        print(
            f"{arm.label}: MISE x1e3 = {mise} "
            f"({arm.reps_used}/{result.spec.reps} replications)"
        )
    if result.selection_counts is not None:
        counts = result.selection_counts["c_both"]
        summary = ", ".join(f"{name}: {count}" for name, count in counts.most_common())
        print(f"selected by C_a&lambda over {result.selection_reps} replications: {summary}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spsreg",
        description="Semiparametric penalized spline regression tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the two stage estimator to a CSV")
    fit.add_argument("data", help="CSV file with header x,y")
    fit.add_argument("--model", required=True, help="guide family name or expression")
    fit.add_argument("--example", type=int, choices=(1, 2, 3, 4), default=None,
                     help="resolve bare model names against this example's library")
    fit.add_argument("--gamma", type=int, choices=(0, 1), default=0)
    fit.add_argument("--degree", type=int, default=3, help="spline degree p")
    fit.add_argument("--penalty-order", type=int, default=2, dest="penalty_order")
    fit.add_argument("--segments", type=_gcv_or_int, default="gcv",
                     help="knot segments K, or 'gcv'")
    fit.add_argument("--lam", type=_gcv_or_float, default="gcv",
                     help="penalty weight, or 'gcv'")
    fit.add_argument("--ci-level", type=float, default=None, dest="ci_level",
                     help="add lo,hi interval columns at this level")
    fit.add_argument("--grid-points", type=int, default=201, dest="grid_points")
    fit.add_argument("--out", default=None, help="output CSV path (default stdout)")
    fit.set_defaults(func=cmd_fit)

    select = sub.add_parser("select", help="rank candidate guide families")
    select.add_argument("data", help="CSV file with header x,y")
    select.add_argument("--candidates", required=True,
                        help="comma separated family names or expressions")
    select.add_argument("--example", type=int, choices=(1, 2, 3, 4), default=None)
    select.add_argument("--gamma", type=int, choices=(0, 1), default=0)
    select.add_argument("--degree", type=int, default=1,
                        help="spline degree p of the eventual estimator")
    select.add_argument("--penalty-order", type=int, default=2, dest="penalty_order")
    select.add_argument("--grid-points", type=int, default=100, dest="grid_points")
    select.add_argument("--out", default=None, help="write the score table CSV here")
    select.set_defaults(func=cmd_select)

    simulate = sub.add_parser("simulate", help="run a Monte Carlo study file")
    simulate.add_argument("study", help="TOML or JSON study file, or a bundled name")
    simulate.add_argument("--out", required=True, help="directory for report files")
    simulate.add_argument("--threads", type=int, default=1)
    simulate.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        return EXIT_INPUT
    try:
        return args.func(args)
    except _InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (RankDeficiencyError, PositivityError, DegenerateFitError) as err:
        print(f"model error: {err}", file=sys.stderr)
        return EXIT_MODEL
    except (SelectionError, BandwidthError, ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
