"""Command-line interface: ``postratio <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver did not converge.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .detection import DetectionConfig, plugin_score, pre_score, sliding_scores
from .dual import radius_schedule, solve_dual
from .errors import (
    DataFileError,
    InvalidInputError,
    PostRatioError,
    SolverFailureError,
)
from .estimator import fit
from .explain import extract_local_linear, surrogate_baseline
from .features import FeatureMap
from .inference import asymptotic_report, consistency_diagnostics
from .likelihood import BlackboxLikelihood, parse_likelihood
from .problem import PreProblem, PriorSampleSet
from .simulation import ExperimentSpec, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    """Bad flag value; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one-line diagnostic; --help has the full usage
        self.exit(EXIT_USAGE, f"{self.prog}: usage error: {message}\n")


def _vector_arg(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _add_problem_args(p):
    p.add_argument("--xp", required=True, help="CSV of p-prior samples (one row per sample)")
    p.add_argument("--xq", required=True, help="CSV of q-prior samples")
    p.add_argument("--feature", default="identity", help="identity | poly2 | autocorr:<L> | lag1")
    p.add_argument(
        "--lp", default="unit", help="unit | gaussian:y=<path>,sigma=<v>[,replicate=<g>] | blackbox:<path>"
    )
    p.add_argument("--lq", default="unit", help="same grammar as --lp")
    p.add_argument("--ridge", type=float, default=0.0, help="ridge penalty added to the objective")
    p.add_argument("--tol", type=float, default=1e-8, help="gradient-norm tolerance")
    p.add_argument("--max-iter", type=int, default=200, help="iteration cap")
    p.add_argument("--out", help="output path (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="postratio", description="Posterior ratio estimation and diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="estimate the ratio parameter")
    _add_problem_args(p)
    p.add_argument("--init", type=_vector_arg, help="starting point, comma-separated")
    p.add_argument("--standardize", action="store_true", help="solve in standardized feature coordinates first")
    p.add_argument("--asymptotic", action="store_true", help="add the asymptotic covariance report")

    p = sub.add_parser("dual", help="solve the dual program and compare with the primal fit")
    _add_problem_args(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--rn", type=float, default=None, help="constraint radius (default 0)")
    group.add_argument("--r3", type=float, default=None, help="radius constant; r_n = R3 / sqrt(min(n_p, n_q))")

    p = sub.add_parser("diagnose", help="check the consistency conditions around a reference point")
    _add_problem_args(p)
    p.add_argument("--delta-ref", type=_vector_arg, help="reference point (default: the fitted estimate)")
    p.add_argument("--radius", type=float, required=True, help="ball radius")
    p.add_argument("--restarts", type=int, default=8, help="random restarts of the eigenvalue search")
    p.add_argument("--seed", type=int, default=0, help="seed for the restarts")

    p = sub.add_parser("detect", help="sliding-window detection scores over a time series")
    p.add_argument("--series", required=True, help="single-column CSV time series")
    p.add_argument("--prior-p", required=True, help="CSV of reference-regime latent windows")
    p.add_argument("--prior-q", required=True, help="CSV of background latent windows")
    p.add_argument("--window", type=_positive_int, required=True, help="window length")
    p.add_argument("--stride", type=_positive_int, default=1, help="step between windows")
    p.add_argument("--sigma", type=float, default=1.0, help="observation noise scale")
    p.add_argument("--feature", default="autocorr:20", help="feature spec applied to each window")
    p.add_argument("--method", choices=["pre", "plugin"], default="pre", help="score type")
    p.add_argument("--score-mode", choices=["objective", "kl"], default="objective", help="score convention")
    p.add_argument("--out", help="CSV output path (stdout when omitted)")

    p = sub.add_parser("explain", help="local linear explanation of a black-box classifier")
    p.add_argument("--xloc", required=True, help="CSV of local samples")
    p.add_argument("--blackbox", required=True, help="blackbox:<path> or <path>; P(+1|x) per x_loc row")
    p.add_argument("--feature", default="identity", help="feature spec")
    p.add_argument("--method", choices=["pre", "surrogate"], default="pre", help="estimator")
    p.add_argument("--out", help="JSON output path (stdout when omitted)")

    p = sub.add_parser("experiment", help="run a replication experiment from a JSON spec")
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--out-dir", default=".", help="directory for summary JSON and CSV tables")
    p.add_argument("--threads", type=_positive_int, default=None, help="worker threads (output is unaffected)")
    p.add_argument("--seed", type=int, default=None, help="override the seed given in --spec")
    p.add_argument("--full-scale", action="store_true", help="use the full-scale experiment sizes")
    return parser


def _table_blackbox(spec: str, samples: PriorSampleSet) -> BlackboxLikelihood:
    """Probability table aligned with the rows of ``samples``."""
    path = spec.split(":", 1)[1] if spec.lower().startswith("blackbox:") else spec
    probs = io.read_vector(path)
    if probs.size != samples.n:
        raise DataFileError(f"{path}: {probs.size} probabilities for {samples.n} samples", path=path)
    bad = ~((probs >= 0) & (probs <= 1))
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0]) + 1
        raise DataFileError(f"{path}: data row {row} is not a probability", path=path, row=row)
    reference = samples.samples

    def lookup(X):
        X = np.asarray(X, dtype=float)
        if X.shape != reference.shape or not np.array_equal(X, reference):
            raise InvalidInputError("a probability table only answers for the sample rows it was built on")
        return probs

    return BlackboxLikelihood(lookup, batched=True)


def _check_likelihood_syntax(flag: str, spec: str) -> None:
    text = spec.strip()
    head, sep, body = text.partition(":")
    head = head.lower()
    if text.lower() == "unit":
        return
    if head == "blackbox" and sep and body.strip():
        return
    if head == "gaussian" and sep:
        opts = {}
        for item in body.split(","):
            key, eq, value = item.partition("=")
            if not eq or not value.strip():
                raise UsageError(f"{flag}: malformed option {item!r} in {spec!r}")
            opts[key.strip().lower()] = value.strip()
        if {"y", "sigma"} - set(opts) or set(opts) - {"y", "sigma", "replicate"}:
            raise UsageError(f"{flag}: gaussian needs y=<path> and sigma=<v>, optionally replicate=<g>")
        try:
            sigma = float(opts["sigma"])
            copies = int(opts.get("replicate", "1"))
        except ValueError:
            raise UsageError(f"{flag}: sigma must be a number and replicate an integer in {spec!r}") from None
        if not (sigma > 0 and np.isfinite(sigma)) or copies < 1:
            raise UsageError(f"{flag}: need sigma > 0 and replicate >= 1 in {spec!r}")
        return
    raise UsageError(f"{flag}: unknown likelihood spec {spec!r}")


def _likelihood(spec: str, samples: PriorSampleSet):
    if spec.strip().lower().startswith("blackbox:"):
        return _table_blackbox(spec.strip(), samples)
    return parse_likelihood(spec, samples.dim, io.read_vector)


def _feature(spec: str, d: int) -> FeatureMap:
    try:
        return FeatureMap.parse(spec, d)
    except InvalidInputError as exc:
        raise UsageError(f"--feature: {exc}") from None


def _load_problem(args) -> PreProblem:
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    if args.max_iter < 1:
        raise UsageError("--max-iter must be positive")
    if not args.ridge >= 0:
        raise UsageError("--ridge must be nonnegative")
    _check_likelihood_syntax("--lp", args.lp)
    _check_likelihood_syntax("--lq", args.lq)
    xp = PriorSampleSet(io.read_matrix(args.xp))
    xq = PriorSampleSet(io.read_matrix(args.xq))
    if xp.dim != xq.dim:
        raise DataFileError(f"{args.xp} has {xp.dim} columns but {args.xq} has {xq.dim}")
    feature = _feature(args.feature, xp.dim)
    lp = _likelihood(args.lp, xp)
    lq = _likelihood(args.lq, xq)
    return PreProblem(lp, lq, xp, xq, feature, args.ridge)


def _emit_json(obj, out) -> None:
    if out:
        io.write_json(out, obj)
    else:
        sys.stdout.write(io.dumps(obj))


def _cmd_fit(args) -> int:
    problem = _load_problem(args)
    res = fit(problem, init=args.init, tol=args.tol, max_iter=args.max_iter, standardize=args.standardize)
    payload = {"fit": res}
    if args.asymptotic and res.converged:
        payload["asymptotic"] = asymptotic_report(problem, res)
    _emit_json(payload, args.out)
    return EXIT_OK if res.converged else EXIT_SOLVER


def _cmd_dual(args) -> int:
    problem = _load_problem(args)
    if args.r3 is not None:
        r_n = radius_schedule(args.r3, problem.n_p, problem.n_q)
    else:
        r_n = 0.0 if args.rn is None else args.rn
    if not r_n >= 0:
        raise UsageError("--rn must be nonnegative")
    dual = solve_dual(problem, r_n=r_n, tol=args.tol)
    primal = fit(problem, tol=args.tol, max_iter=args.max_iter)
    payload = {"dual": dual, "primal_delta": primal.delta_hat, "primal_converged": primal.converged}
    if dual.converged and primal.converged:
        payload["delta_gap"] = float(np.linalg.norm(dual.delta_dual - primal.delta_hat))
    _emit_json(payload, args.out)
    return EXIT_OK if dual.converged and primal.converged else EXIT_SOLVER


def _cmd_diagnose(args) -> int:
    if not args.radius > 0:
        raise UsageError("--radius must be positive")
    if args.restarts < 0:
        raise UsageError("--restarts must be nonnegative")
    problem = _load_problem(args)
    status = EXIT_OK
    payload = {}
    ref = args.delta_ref
    if ref is None:
        res = fit(problem, tol=args.tol, max_iter=args.max_iter)
        payload["fit"] = res
        ref = res.delta_hat
        if not res.converged:
            status = EXIT_SOLVER
    elif ref.size != problem.k:
        raise UsageError(f"--delta-ref has {ref.size} entries, the feature map has {problem.k}")
    payload["diagnostics"] = consistency_diagnostics(problem, ref, args.radius, args.restarts, seed=args.seed)
    _emit_json(payload, args.out)
    return status


def _cmd_detect(args) -> int:
    if not args.sigma > 0:
        raise UsageError("--sigma must be positive")
    series = io.read_vector(args.series)
    prior_p = PriorSampleSet(io.read_matrix(args.prior_p))
    prior_q = PriorSampleSet(io.read_matrix(args.prior_q))
    for name, bank in (("--prior-p", prior_p), ("--prior-q", prior_q)):
        if bank.dim != args.window:
            raise DataFileError(f"{name}: rows have length {bank.dim}, --window is {args.window}")
    feature = _feature(args.feature, args.window)
    config = DetectionConfig(
        args.window, feature, prior_p, prior_q, args.sigma, args.stride, score_mode=args.score_mode
    )
    scorer = pre_score if args.method == "pre" else plugin_score
    result = sliding_scores(series, config, scorer)
    rows = result.rows()
    if args.out:
        io.write_csv(args.out, ["position", "score"], rows)
    else:
        sys.stdout.write("position,score\n")
        for pos, score in rows:
            sys.stdout.write(f"{pos},{'' if score is None else io.fmt(score)}\n")
    return EXIT_SOLVER if any(score is None for _, score in rows) else EXIT_OK


def _cmd_explain(args) -> int:
    x_loc = PriorSampleSet(io.read_matrix(args.xloc))
    feature = _feature(args.feature, x_loc.dim)
    bb = _table_blackbox(args.blackbox, x_loc)
    if args.method == "pre":
        expl = extract_local_linear(bb, x_loc, feature)
    else:
        if feature.kind != "identity":
            raise UsageError("the surrogate baseline only supports the identity feature")
        expl = surrogate_baseline(bb, x_loc)
    _emit_json(expl, args.out)
    return EXIT_OK if expl.converged else EXIT_SOLVER


def _cmd_experiment(args) -> int:
    data = io.read_json(args.spec)
    if not isinstance(data, dict):
        raise DataFileError(f"{args.spec}: expected a JSON object", path=args.spec)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    if args.full_scale:
        data["full_scale"] = True
    try:
        spec = ExperimentSpec.from_dict(data)
    except (InvalidInputError, TypeError) as exc:
        raise DataFileError(f"{args.spec}: {exc}", path=args.spec) from None
    report = run_experiment(spec)
    paths = report.write(Path(args.out_dir))
    sys.stdout.write(io.dumps({"summary": report.summary, "files": [str(p) for p in paths]}))
    return EXIT_OK


COMMANDS = {
    "fit": _cmd_fit,
    "dual": _cmd_dual,
    "diagnose": _cmd_diagnose,
    "detect": _cmd_detect,
    "explain": _cmd_explain,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"postratio {args.command}: usage error: {exc}\n")
        return EXIT_USAGE
    except SolverFailureError as exc:
        sys.stderr.write(f"postratio {args.command}: solver failure: {exc}\n")
        return EXIT_SOLVER
    except PostRatioError as exc:
        sys.stderr.write(f"postratio {args.command}: data error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
