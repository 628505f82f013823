"""Command-line front end.

Results go to stdout as one JSON document; logs and warnings go to stderr.
Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime failure (including failed theory checks).
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import graph
from .errors import BMGCError, ConfigError, DataError, DomainError, RuntimeFailure

log = logging.getLogger("bmgc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _default_seed():
    raw = os.environ.get("BMGC_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"BMGC_SEED must be an integer, got {raw!r}") from None


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    sys.stdout.flush()


def _write_run_json(out, command, resolved, extra=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "args": resolved}
    if extra:
        doc.update(extra)
    (out / "run.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolved(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def cmd_generate(args):
    from .metrics import edge_homophily
    from .synth import CsbmParams, MultiCsbmParams, multi_csbm_generate

    base = CsbmParams(N=args.n, d_f=args.df, d=args.deg, epsilon=args.eps, phi=args.phi, seed=args.seed)
    g = multi_csbm_generate(MultiCsbmParams(base=base, V=args.views, rho=args.rho))
    graph.write_dataset(g, args.out)
    lam, mu = base.lambda_mu()
    summary = {
        "out": str(args.out), "n": g.n, "d_f": g.features.shape[1], "views": g.num_views,
        "lambda": lam, "mu": mu,
        "edges": [a.num_edges for a in g.views],
        "homophily": [edge_homophily(a, g.labels) for a in g.views],
    }
    _write_run_json(args.out, "generate", _resolved(args), {"summary": summary})
    return summary


def _train_config(args, C):
    from .trainer import TrainConfig

    return TrainConfig(clusters=C, epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay,
                       t_recalc=args.t_recalc, d_r=args.dr, tau=args.tau, K=args.k, alpha=args.alpha,
                       seed=args.seed, batch_size=args.batch_size, clu_warmup_epochs=args.warmup,
                       hidden=args.hidden, normalize_features=args.normalize_features,
                       dtype=args.dtype, final_restarts=args.restarts)


def write_history(path, history):
    if not history:
        return
    fields = list(history[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})


def write_assignments(path, assignments):
    Path(path).write_text("".join(f"{int(a)}\n" for a in assignments), encoding="utf-8")


def read_assignments(path):
    try:
        text = Path(path).read_text(encoding="utf-8").split()
        return np.array([int(t) for t in text], dtype=np.int64)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_train(args):
    from .evaluation import evaluate
    from .nn import save_checkpoint
    from .trainer import train

    g = graph.load_dataset(args.data)
    cfg = _train_config(args, args.clusters).validate(g.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    def progress(row, state):
        if row["epoch"] % 10 == 0 or row["epoch"] == cfg.epochs - 1:
            log.info("epoch %d total %.5f dominant %d", row["epoch"], row["total"], row["dominant_view"])

    res = train(g, cfg, progress=progress)
    log.info("trained in %.1fs", time.perf_counter() - t0)
    write_assignments(out / "assignments.txt", res.clusters.assignments)
    write_history(out / "history.csv", res.history)
    meta = {"config": cfg.to_dict(), "dominant_view": res.state.dominant_view, "epoch": res.state.epoch}
    save_checkpoint(out / "checkpoint.bin", res.state.model.named_arrays(), meta)
    summary = {
        "out": str(out),
        "initial_dominant_view": res.initial_dominant_view,
        "dominant_view": res.state.dominant_view,
        "final_discrepancies": res.final_discrepancies,
        "final_loss": res.history[-1],
        "inertia": res.clusters.inertia,
    }
    if g.labels is not None:
        summary["eval"] = evaluate(res.clusters.assignments, g.labels).to_dict()
    _write_run_json(out, "train", _resolved(args), {"config": cfg.to_dict(), "summary": summary})
    return summary


def cmd_eval(args):
    from .evaluation import evaluate

    g = graph.load_dataset(args.data)
    if g.labels is None:
        raise DataError(f"{args.data}: dataset has no labels")
    pred = read_assignments(args.assignments)
    report = evaluate(pred, g.labels).to_dict()
    if args.out:
        _write_run_json(args.out, "eval", _resolved(args), {"report": report})
    return report


def cmd_acd(args):
    from .metrics import view_quality_report
    from .propagate import sgc_views

    g = graph.load_dataset(args.data)
    if g.labels is None:
        raise DataError(f"{args.data}: ACD needs labels")
    aggs = sgc_views(g, args.k, self_loops=False, isolated="zero")
    report = view_quality_report(g.features, aggs, g.labels, g.num_classes, adjs=g.views).to_dict()
    if args.out:
        _write_run_json(args.out, "acd", _resolved(args), {"report": report})
    return report


def cmd_mine(args):
    from .metrics import view_quality_report
    from .propagate import aggregate_views

    g = graph.load_dataset(args.data)
    aggs = aggregate_views(g, args.k, args.alpha).matrices
    report = view_quality_report(g.features, aggs, g.labels, g.num_classes,
                                 adjs=g.views if g.labels is not None else None).to_dict()
    if args.out:
        _write_run_json(args.out, "mine", _resolved(args), {"report": report})
    return report


def cmd_probe(args):
    from .metrics import view_quality_report
    from .propagate import sgc_views

    g = graph.load_dataset(args.data)
    if g.labels is None:
        raise DataError(f"{args.data}: probing needs labels")
    aggs = sgc_views(g, args.k, self_loops=False, isolated="zero")
    report = view_quality_report(g.features, aggs, g.labels, g.num_classes, adjs=g.views,
                                 probe=True, seed=args.seed).to_dict()
    if args.out:
        _write_run_json(args.out, "probe", _resolved(args), {"report": report})
    return report


def cmd_verify_theory(args):
    from .theory import TwoBlockModel, lemma1_check, theorem1_check

    mu1 = np.zeros(args.df)
    mu1[0] = args.mu_norm
    mu2 = -mu1 if args.mu2 == "opposite" else np.roll(mu1, 1)
    m = TwoBlockModel(args.n, args.p, args.q, mu1, mu2, args.sigma, args.k)
    lambdas = [float(x) for x in args.lambdas.split(",")] if args.lambdas else None
    report = {
        "lemma1": lemma1_check(m, args.trials, seed=args.seed),
        "theorem1": theorem1_check(m, args.trials, lambdas=lambdas, seed=args.seed),
    }
    report["passed"] = bool(report["lemma1"]["passed"] and report["theorem1"]["passed"])
    if args.out:
        _write_run_json(args.out, "verify-theory", _resolved(args), {"report": report})
    if not report["passed"]:
        _emit(report)
        raise RuntimeFailure("theory checks failed")
    return report


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser():
    p = _Parser(prog="bmgc", description="Balanced multi-relational graph clustering.")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="cap on internal parallelism (default: available cores)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("generate", help="sample a multi-relational cSBM dataset")
    s.add_argument("--phi", type=float, default=0.5)
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--views", type=_positive_int, default=3)
    s.add_argument("--n", type=_positive_int, default=5000)
    s.add_argument("--df", type=_positive_int, default=2000)
    s.add_argument("--deg", type=float, default=5.0)
    s.add_argument("--eps", type=float, default=3.25)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("train", help="train BMGC and cluster")
    s.add_argument("--data", required=True)
    s.add_argument("--clusters", type=int, required=True)
    s.add_argument("--epochs", type=int, default=400)
    s.add_argument("--lr", type=float, default=1e-2)
    s.add_argument("--weight-decay", type=float, default=1e-4)
    s.add_argument("--t-recalc", type=int, default=50)
    s.add_argument("--dr", type=int, default=10)
    s.add_argument("--tau", type=float, default=1.0)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--alpha", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--batch-size", type=int, default=None)
    s.add_argument("--warmup", type=int, default=50, help="epochs before the clustering loss starts")
    s.add_argument("--hidden", type=int, default=256)
    s.add_argument("--restarts", type=int, default=20, help="k-means restarts for the final clustering")
    s.add_argument("--normalize-features", action="store_true")
    s.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score assignments against dataset labels")
    s.add_argument("--data", required=True)
    s.add_argument("--assignments", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_eval)

    for name, fn, text in (("acd", cmd_acd, "per-view ACD, homophily and Gram discrepancy"),
                           ("probe", cmd_probe, "per-view linear-probe accuracy")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--data", required=True)
        s.add_argument("--k", type=int, default=3)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out", default=None)
        s.set_defaults(func=fn)

    s = sub.add_parser("mine", help="unsupervised dominant-view mining")
    s.add_argument("--data", required=True)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--alpha", type=float, default=0.3)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_mine)

    s = sub.add_parser("verify-theory", help="Monte Carlo checks of the two-block aggregation results")
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--p", type=float, default=0.3)
    s.add_argument("--q", type=float, default=0.1)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--df", type=_positive_int, default=4)
    s.add_argument("--mu-norm", type=float, default=4.0)
    s.add_argument("--mu2", choices=["opposite", "orthogonal"], default="opposite")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--lambdas", default="0.9,0.5,0.1", help="comma-separated second eigenvalues to order")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_verify_theory)
    return p


def _set_threads(n):
    graph.set_num_threads(n)
    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "seed", "absent") is None:
            args.seed = _default_seed()
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    threads = args.threads or os.cpu_count() or 1
    _set_threads(threads)
    try:
        result = args.func(args)
    except (ConfigError, DomainError, UsageError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except RuntimeFailure as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except BMGCError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    _emit(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
