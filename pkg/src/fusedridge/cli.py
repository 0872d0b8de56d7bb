"""Command-line front end: ``fusedridge <command> [options]``.

Exit codes: 0 success, 2 validation error, 3 convergence failure, 4 I/O error.
"""

import argparse
import json
import os
import sys

import numpy as np
from scipy import stats

from . import datafiles as io
from .core import gaussian_loglik
from .errors import ConvergenceError, FusedRidgeError, InputError
from .estimator import ClassData, fit, objective
from .graphs import (
    SparseGraph, compare, covariance_path_decomposition, edges_to_csv, lfdr_fit,
    meta_difference, offdiag_values, partial_correlation, sparsified_precision, sparsify,
    to_dot, total_network,
)
from .inference import permutation_test
from .penalty import PenaltyTemplate, check_penalty, complete_template, factorial_template, instantiate
from .selection import METHODS, optimize_penalties
from .sim import SimulationConfig, results_to_csv, run_scenario, scenario_config, summarize
from .targets import dag_target, read_edge_list, scalar_target

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4


# argument parsing helpers

def _key_values(text):
    """``a=1,b=2`` to ``{"a": 1.0, "b": 2.0}``."""
    out = {}
    for item in filter(None, (t.strip() for t in text.split(","))):
        if "=" not in item:
            raise InputError(f"expected name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise InputError(f"value of {k.strip()} is not a number: {v!r}") from None
    return out


def _template(spec, G):
    """Template from ``complete``, ``separate``, ``factorial:2x3[:name1,name2]`` or a JSON file."""
    if spec in (None, "complete"):
        return complete_template(G)
    if spec == "separate":
        return complete_template(G, ridge="separate")
    if spec.startswith("factorial:"):
        parts = spec.split(":")
        try:
            sizes = [int(x) for x in parts[1].split("x")]
        except ValueError:
            raise InputError(f"bad factorial sizes in {spec!r}") from None
        names = parts[2].split(",") if len(parts) > 2 else None
        tmpl = factorial_template(sizes, names)
    else:
        doc = io.read_config(spec)
        tmpl = PenaltyTemplate.from_dict(doc["template"] if "template" in doc else doc)
    if tmpl.G != G:
        raise InputError(f"template has {tmpl.G} classes but the data have {G}")
    return tmpl


def _penalty(spec, template_spec, G):
    """Penalty matrix from inline values, a JSON document or a matrix CSV."""
    if spec.endswith(".csv"):
        return check_penalty(io.read_matrix(spec)[1], G), {}
    if spec.endswith(".json"):
        doc = io.read_config(spec)
        if "matrix" in doc:
            return check_penalty(np.array(doc["matrix"], dtype=float), G), {}
        tmpl = _template_from_doc(doc.get("template"), G)
        values = {k: float(v) for k, v in doc["values"].items()}
        return instantiate(tmpl, values), values
    values = _key_values(spec)
    if template_spec is None and any(k.startswith("lambda_") and k[7:].isdigit() for k in values):
        template_spec = "separate"
    return instantiate(_template(template_spec, G), values), values


def _template_from_doc(t, G):
    if t is None or isinstance(t, str):
        return _template(t, G)
    return PenaltyTemplate.from_dict(t)


def _targets(spec, names, classes):
    """Target matrices for ``scalar:auto|pooled|<v>``, ``zero``, a matrix CSV or ``dag:<edges>,<pilot>``."""
    p = len(names)
    if spec == "zero":
        return [np.zeros((p, p))] * len(classes)
    if spec.startswith("scalar:"):
        arg = spec.split(":", 1)[1]
        if arg == "auto":
            return [scalar_target(d.S) for d in classes]
        if arg == "pooled":
            n = sum(d.n for d in classes)
            return [scalar_target(sum(d.n * d.S for d in classes) / n)] * len(classes)
        try:
            alpha = float(arg)
        except ValueError:
            raise InputError(f"bad scalar target {spec!r}") from None
        if alpha < 0:
            raise InputError("scalar target must be non-negative")
        return [alpha * np.eye(p)] * len(classes)
    if spec.startswith("dag:"):
        try:
            edges, pilot = spec[4:].split(",", 1)
        except ValueError:
            raise InputError("dag target needs 'dag:<edgelist>,<pilot.csv>'") from None
        graph = read_edge_list(edges, names)
        pnames, _, X = io.read_dataset(pilot)
        if pnames != list(names):
            raise InputError("pilot columns do not match the data columns")
        return [dag_target(np.vstack(list(X.values())), graph)] * len(classes)
    tnames, T = io.read_matrix(spec)
    if tnames != list(names):
        raise InputError(f"target matrix {spec} has different variable names")
    return [T] * len(classes)


def _load(path):
    names, labels, X = io.read_dataset(path)
    classes = [ClassData.from_samples(X[g], name=g) for g in labels]
    return names, labels, classes


def _fit_bundle(path):
    report = os.path.join(path, "report.json")
    with open(report, encoding="utf-8") as fh:
        doc = json.load(fh)
    omegas = {}
    for label, fname in doc["files"].items():
        names, M = io.read_matrix(os.path.join(path, fname))
        omegas[label] = M
    return doc["variables"], doc["classes"], omegas


def _select_classes(arg, labels):
    if not arg:
        return list(labels)
    chosen = [c.strip() for c in arg.split(",")]
    unknown = [c for c in chosen if c not in labels]
    if unknown:
        raise InputError(f"unknown class name(s): {', '.join(unknown)}; known: {', '.join(labels)}")
    return chosen


# commands

def cmd_fit(args):
    names, labels, classes = _load(args.data)
    G = len(classes)
    Lambda, values = _penalty(args.penalty, args.template, G)
    T = _targets(args.target, names, classes)
    est = fit(classes, Lambda, T, eps=args.eps, max_iter=args.max_iter)
    io.ensure_dir(args.out)
    files = {}
    for g, label in enumerate(labels):
        fname = f"omega_{io.safe_name(label)}.csv"
        io.write_matrix(os.path.join(args.out, fname), est.omegas[g], names)
        files[label] = fname
    loglik = [gaussian_loglik(O, d.S, d.n) for O, d in zip(est.omegas, classes)]
    report = dict(
        spec_version=io.SPEC_VERSION, command="fit", classes=labels, variables=names,
        n=[d.n for d in classes], penalty=Lambda, penalty_values=values, target=args.target,
        iterations=est.iterations, converged=est.converged, method=est.method,
        final_relative_change=est.final_relative_change, kkt_residuals=est.kkt_residuals,
        loglik=loglik, loglik_total=float(sum(loglik)),
        objective=objective(est.omegas, classes, Lambda, T), files=files,
    )
    io.write_json(os.path.join(args.out, "report.json"), report)
    return EXIT_OK


def cmd_select(args):
    names, labels, classes = _load(args.data)
    tmpl = _template(args.template, len(classes))
    T = _targets(args.target, names, classes)
    start = _key_values(args.start) if args.start else None
    res = optimize_penalties(tmpl, classes, T, method=args.method, start=start, budget=args.budget,
                             K=args.K, seed=args.seed)
    report = dict(
        spec_version=io.SPEC_VERSION, command="select", classes=labels, method=args.method,
        template=tmpl.to_dict(), values=res.values, penalty=res.Lambda, score=res.score.value,
        converged=res.converged, evaluations=res.evaluations, seed=args.seed,
        trace=[dict(values=v, score=s) for v, s in res.trace],
    )
    io.write_json(args.out, report)
    return EXIT_OK


def cmd_test(args):
    names, labels, classes = _load(args.data)
    G = len(classes)
    if args.target.startswith("scalar:auto"):
        raise InputError("the score test needs a common target; use scalar:pooled or a fixed target")
    T = _targets(args.target, names, classes)[0]
    Lambda = args.lam * np.eye(G)
    res = permutation_test(classes, Lambda, T, B=args.B, seed=args.seed)
    report = dict(spec_version=io.SPEC_VERSION, command="test", classes=labels, lam=args.lam,
                  target=args.target, observed_U=res.observed_U, p_value=res.p_value, B=res.B,
                  seed=res.seed, null_draws=res.null_draws)
    if args.calibrate:
        # relabel the samples at random (sizes kept) to put the data under the null
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
        rows = np.vstack([d.Y for d in classes])
        bounds = np.cumsum([0] + [d.n for d in classes])
        pvals = []
        for r in range(args.calibrate):
            perm = rows[rng.permutation(len(rows))]
            null_data = [ClassData.from_samples(perm[bounds[g]:bounds[g + 1]]) for g in range(G)]
            pvals.append(permutation_test(null_data, Lambda, T, B=args.B, seed=[args.seed, 2, r]).p_value)
        ks = stats.kstest(pvals, "uniform")
        report["calibration"] = dict(repetitions=args.calibrate, p_values=pvals,
                                     ks_statistic=float(ks.statistic), ks_pvalue=float(ks.pvalue))
    io.write_json(args.out, report)
    return EXIT_OK


def cmd_sparsify(args):
    if not 0 < args.threshold < 1:
        raise InputError("threshold must lie strictly between 0 and 1")
    names, labels, omegas = _fit_bundle(args.fit)
    io.ensure_dir(args.out)
    summary = {}
    for label in _select_classes(args.classes, labels):
        P = partial_correlation(omegas[label])
        lf = lfdr_fit(offdiag_values(P))
        graph = sparsify(P, lf, args.threshold)
        stem = io.safe_name(label)
        with open(os.path.join(args.out, f"edges_{stem}.csv"), "w", encoding="utf-8") as fh:
            fh.write(edges_to_csv(graph, names))
        with open(os.path.join(args.out, f"graph_{stem}.dot"), "w", encoding="utf-8") as fh:
            fh.write(to_dot(graph, names, title=f"class_{stem}"))
        summary[label] = dict(edges=len(graph.edges), eta0=lf.eta0, kappa=lf.kappa, flat=lf.flat)
    io.write_json(os.path.join(args.out, "sparsify.json"),
                  dict(spec_version=io.SPEC_VERSION, command="sparsify", threshold=args.threshold,
                       classes=summary))
    return EXIT_OK


def _graph(path, names):
    return SparseGraph(len(names), tuple(io.read_edges(path, names)))


def cmd_summarize(args):
    names = _fit_bundle(args.fit)[0]
    graphs = [_graph(f, names) for f in args.edges]
    if args.compare:
        if len(graphs) != 2 or args.subtract:
            raise InputError("--compare needs exactly two edge files and no --subtract")
        result = compare(graphs[0], graphs[1], args.compare)
    else:
        result = total_network(graphs, signed=args.signed)
        if args.subtract:
            other = total_network([_graph(f, names) for f in args.subtract], signed=args.signed)
            result = meta_difference(result, other)
        if args.min_abs_weight is not None:
            result = result.filter(args.min_abs_weight)
    with open(args.out + ".csv", "w", encoding="utf-8") as fh:
        fh.write(edges_to_csv(result, names))
    with open(args.out + ".dot", "w", encoding="utf-8") as fh:
        fh.write(to_dot(result, names, title="summary"))
    return EXIT_OK


def cmd_paths(args):
    names, labels, omegas = _fit_bundle(args.fit)
    label = _select_classes(args.cls, labels)[0]
    index = {nm: i for i, nm in enumerate(names)}
    for v in (args.a, args.b):
        if v not in index:
            raise InputError(f"unknown variable {v!r}")
    Omega = omegas[label]
    shift = 0.0
    if args.edges:
        Omega, shift = sparsified_precision(Omega, _graph(args.edges, names))
    common = _graph(args.common, names) if args.common else None
    differential = _graph(args.differential, names) if args.differential else None
    dec = covariance_path_decomposition(Omega, index[args.a], index[args.b], args.max_length,
                                        common, differential)
    lines = ["path,length,contribution,label"]
    for c in dec.paths:
        lines.append(",".join(["-".join(names[v] for v in c.path), str(c.length),
                               io.fmt(c.contribution), c.label or ""]))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    io.write_json(args.report, dict(spec_version=io.SPEC_VERSION, command="paths", cls=label,
                                    a=args.a, b=args.b, paths=len(dec.paths), total=dec.total,
                                    covariance=dec.covariance, residual=dec.residual,
                                    complete=dec.complete, diagonal_shift=shift))
    return EXIT_OK


def cmd_simulate(args):
    doc = io.read_config(args.config)
    doc = {k: v for k, v in doc.items() if k != "spec_version"}
    scenario = doc.pop("scenario", None)
    if scenario is None:
        raise InputError("configuration needs a 'scenario' key")
    for key in ("n", "bands", "targets", "estimators"):
        if isinstance(doc.get(key), list):
            doc[key] = tuple(doc[key])
    if args.replicates is not None:
        doc["replicates"] = args.replicates
    if args.seed_given:
        doc["seed"] = args.seed
    try:
        cfg = scenario_config(scenario, **doc) if doc.pop("preset", True) else SimulationConfig(scenario, **doc)
    except TypeError as exc:
        raise InputError(f"bad configuration field: {exc}") from None
    rows = run_scenario(cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(results_to_csv(rows))
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(results_to_csv(summarize(rows) + summarize(rows, loss="quadratic_loss")))
    return EXIT_OK


# parser

def build_parser():
    parser = argparse.ArgumentParser(prog="fusedridge",
                                     description="Fused ridge estimation of several precision matrices.")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for folds, permutations and simulations (default 0)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap; all commands currently run in a single process")
    sub = parser.add_subparsers(dest="command", required=True)

    target_help = ("target: scalar:auto (per class p/tr S_g), scalar:pooled, scalar:<value>, zero, "
                   "a matrix CSV, or dag:<edgelist>,<pilot.csv>")

    p = sub.add_parser("fit", help="estimate the class precision matrices")
    p.add_argument("--data", required=True, help="CSV with a leading 'class' column")
    p.add_argument("--penalty", required=True,
                   help="name=value list (e.g. lambda=1,lambda_f=0.5), penalty JSON, or matrix CSV")
    p.add_argument("--template", default=None,
                   help="complete, separate, factorial:2x3[:names] or template JSON (for name=value penalties)")
    p.add_argument("--target", default="scalar:pooled", help=target_help)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="choose penalties by cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--template", default="complete")
    p.add_argument("--method", choices=METHODS, default="loocv")
    p.add_argument("--K", type=int, default=5, help="folds for kcv")
    p.add_argument("--budget", type=int, default=200, help="maximum score evaluations")
    p.add_argument("--start", default=None, help="starting values, name=value list")
    p.add_argument("--target", default="scalar:pooled", help=target_help)
    p.add_argument("--out", default="-", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("test", help="permutation score test of equal precision matrices")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="ridge penalty per class")
    p.add_argument("--target", default="scalar:pooled", help=target_help)
    p.add_argument("--B", type=int, default=1000, help="number of permutations")
    p.add_argument("--calibrate", type=int, default=0,
                   help="also run the test on this many label-shuffled copies and report a KS check")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("sparsify", help="local-FDR edge selection per class")
    p.add_argument("--fit", required=True, help="directory written by 'fit'")
    p.add_argument("--threshold", type=float, default=0.99, help="keep edges with 1 - lfdr >= threshold")
    p.add_argument("--classes", default=None, help="comma-separated class names (default all)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("summarize", help="total, differential or common networks")
    p.add_argument("--fit", required=True, help="fit directory (for variable names)")
    p.add_argument("--edges", nargs="+", required=True, help="edge-list CSVs")
    p.add_argument("--subtract", nargs="+", default=None, help="edge lists whose total is subtracted")
    p.add_argument("--signed", action="store_true", help="sum signed adjacency indicators")
    p.add_argument("--min-abs-weight", type=float, default=None, help="keep |w| above this value")
    p.add_argument("--compare", choices=("difference", "intersection"), default=None)
    p.add_argument("--out", required=True, help="output prefix (.csv and .dot)")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("paths", help="decompose a covariance into path contributions")
    p.add_argument("--fit", required=True)
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--edges", default=None, help="support graph; default is the full precision")
    p.add_argument("--max-length", type=int, default=None)
    p.add_argument("--common", default=None, help="common network edge list, for labels")
    p.add_argument("--differential", default=None, help="differential network edge list, for labels")
    p.add_argument("--out", required=True, help="path table CSV")
    p.add_argument("--report", default="-", help="summary JSON (default stdout)")
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("simulate", help="run a simulation scenario")
    p.add_argument("--config", required=True, help="scenario JSON with spec_version and scenario")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--summary", default=None, help="optional summary CSV")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"fusedridge: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except FusedRidgeError as exc:
        print(f"fusedridge: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, KeyError) as exc:
        print(f"fusedridge: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
