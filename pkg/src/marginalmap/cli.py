"""Command-line frontend: solve, check, gen and bench."""
import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional

import numpy as np

from .baselines import EmOptions, TabooOptions, run_em, run_taboo
from .beliefs import BeliefSet
from .errors import ParseError, ResourceLimitError
from .io import (apply_evidence, gen_grid, gen_hmm, gen_latent_tree, parse_evidence, parse_query, parse_uai,
                 write_query, write_uai)
from .jgraph import FactorModel, build_junction_graph, from_pairwise, run_mixed_jgbp, to_pairwise
from .model import PairwiseModel
from .mp import (SolverOptions, check_mixed_consistency, check_reparameterization, run_annealed, run_jiang,
                 run_max_product, run_mixed_product, run_sum_product)
from .oracle import DEFAULT_CAP, marginal_map_exact
from .proximal import ProximalOptions, run_proximal

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CAP = 3
EXIT_FLAGS = 4

CSV_SCHEMA = "# marginalmap-bench v1: sigma,algorithm,trials,success_rate,mean_rel_error,mean_bound_gap,bound_rows,converged_rate"
SUCCESS_TOL = 1e-8

ALGORITHMS = ("mixed-bethe", "proximal-bethe", "proximal-trw", "jiang", "sum-product", "max-product",
              "taboo", "em", "annealed", "mixed-jgbp")
FAMILIES = ("hmm", "tree", "grid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FLAGS, f"{self.prog}: error: {message}\n")


def _read(path: Optional[str], what: str) -> str:
    if path is None:
        raise UsageError(f"missing {what} file")
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {what} file {path!r}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# algorithm registry
# ---------------------------------------------------------------------------

def _mp_opts(a) -> SolverOptions:
    kw = dict(seed=a.seed, cap=a.cap)
    if a.max_iters is not None:
        kw["max_iters"] = a.max_iters
    if a.damping is not None:
        kw["damping"] = a.damping
    if a.inits is not None:
        kw["num_random_inits"] = a.inits
    return SolverOptions(**kw)


def _prox_opts(a) -> ProximalOptions:
    kw = dict(seed=a.seed, cap=a.cap)
    if a.max_iters is not None:
        kw["max_outer"] = a.max_iters
    if a.damping is not None:
        kw["damping"] = a.damping
    return ProximalOptions(**kw)


def _taboo_opts(a) -> TabooOptions:
    kw = dict(seed=a.seed, cap=a.cap)
    if a.max_iters is not None:
        kw["max_steps"] = a.max_iters
    if a.inits is not None:
        kw["num_random_inits"] = a.inits
    return TabooOptions(**kw)


def _em_opts(a) -> EmOptions:
    kw = dict(seed=a.seed, cap=a.cap)
    if a.max_iters is not None:
        kw["max_rounds"] = a.max_iters
    if a.inits is not None:
        kw["num_random_inits"] = a.inits
    return EmOptions(**kw)


RUNNERS: Dict[str, Callable] = {
    "mixed-bethe": lambda m, a: run_mixed_product(m, opts=_mp_opts(a)),
    "jiang": lambda m, a: run_jiang(m, opts=_mp_opts(a)),
    "sum-product": lambda m, a: run_sum_product(m, opts=_mp_opts(a)),
    "max-product": lambda m, a: run_max_product(m, opts=_mp_opts(a)),
    "annealed": lambda m, a: run_annealed(m, opts=_mp_opts(a)),
    "proximal-bethe": lambda m, a: run_proximal(m, "bethe", _prox_opts(a)),
    "proximal-trw": lambda m, a: run_proximal(m, "trw", _prox_opts(a)),
    "taboo": lambda m, a: run_taboo(m, _taboo_opts(a)),
    "em": lambda m, a: run_em(m, _em_opts(a)),
    "mixed-jgbp": lambda m, a: run_mixed_jgbp(build_junction_graph(m if isinstance(m, FactorModel) else from_pairwise(m)),
                                              _mp_opts(a)),
}


def load_problem(a):
    """Model file plus query and optional evidence; pairwise whenever every scope has at most two variables."""
    text = _read(a.model, "model")
    qtext = _read(a.query, "query")
    fm = parse_uai(text)
    B = parse_query(qtext, fm.num_vars)
    if a.evid is not None:
        ev = parse_evidence(_read(a.evid, "evidence"), list(fm.cards))
        fm = apply_evidence(fm, ev)
    is_max = np.zeros(fm.num_vars, dtype=bool)
    is_max[B] = True
    fm = fm.with_roles(is_max)
    if all(len(s) <= 2 for s in fm.scopes):
        return to_pairwise(fm)
    return fm


def solve(model, alg: str, a):
    if isinstance(model, FactorModel) and alg != "mixed-jgbp":
        raise UsageError(f"algorithm {alg!r} needs a pairwise model; use mixed-jgbp for higher-order factors")
    return RUNNERS[alg](model, a)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _emit(text: str, out: Optional[str]):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def cmd_solve(a) -> int:
    model = load_problem(a)
    rep = solve(model, a.alg, a)
    doc = rep.to_dict()
    if a.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["algorithm", "decode", "q_value", "bound", "converged", "wall_time_ms", "seed"])
        w.writerow([doc["algorithm"], " ".join(map(str, doc["decode"])), doc["q_value"], doc["bound"],
                    doc["converged"], doc["wall_time_ms"], doc["seed"]])
        _emit(buf.getvalue(), a.out)
    else:
        _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", a.out)
    return EXIT_OK


def _perturb(b: BeliefSet, seed: int) -> BeliefSet:
    rng = np.random.default_rng(seed)
    out = b.copy()
    for k, t in enumerate(out.node):
        t = t * np.exp(0.1 * rng.standard_normal(t.shape))
        out.node[k] = t / t.sum()
    for k, t in enumerate(out.edge):
        t = t * np.exp(0.1 * rng.standard_normal(t.shape))
        out.edge[k] = t / t.sum()
    return out


def cmd_check(a) -> int:
    model = load_problem(a)
    if isinstance(model, FactorModel):
        raise UsageError("check needs a pairwise model")
    if a.alg not in ("mixed-bethe", "jiang", "sum-product", "max-product"):
        raise UsageError(f"check supports mixed-bethe, jiang, sum-product and max-product, not {a.alg!r}")
    rep = solve(model, a.alg, a)
    b = rep.beliefs if a.alg == "sum-product" else rep.mixed
    if a.perturb:
        b = _perturb(b, a.seed)
    rho = np.ones(model.num_edges)
    # sum-product beliefs satisfy the plain sum identities on every edge, whatever the roles
    target = model.with_roles(np.zeros(model.num_vars, dtype=bool)) if a.alg == "sum-product" else model
    cons = check_mixed_consistency(target, b)
    try:
        reparam = check_reparameterization(target, rho, b, a.seed)
    except Exception as exc:  # zero beliefs on positive-probability states
        reparam = None
        cons["reparam_error"] = str(exc)
    doc = {"algorithm": rep.algorithm, "converged": bool(rep.converged), "perturbed": bool(a.perturb),
           "residuals": {"reparameterization": reparam, **{k: v for k, v in cons.items() if v is not None}},
           "decode": [int(v) for v in rep.decode], "q_value": rep.q_value, "seed": a.seed}
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", a.out)
    return EXIT_OK


def generate(family: str, a) -> PairwiseModel:
    if family == "hmm":
        return gen_hmm(a.n if a.n is not None else 20, a.sigma, a.seed, a.card)
    if family == "tree":
        return gen_latent_tree(a.n if a.n is not None else 50, a.sigma, a.seed, a.card, a.max_leaves)
    if family == "grid":
        return gen_grid(a.side, a.pattern, a.sigma, a.seed, a.card)
    raise UsageError(f"unknown family {family!r}")


def cmd_gen(a) -> int:
    try:
        m = generate(a.family, a)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    prefix = a.out or f"{a.family}-{a.seed}"
    with open(prefix + ".uai", "w") as fh:
        fh.write(write_uai(from_pairwise(m)))
    with open(prefix + ".query", "w") as fh:
        fh.write(write_query(list(m.max_nodes)))
    print(json.dumps({"model": prefix + ".uai", "query": prefix + ".query", "num_vars": m.num_vars,
                      "num_edges": m.num_edges, "max_nodes": len(m.max_nodes)}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

class _Args:
    """Picklable flag bundle for worker processes."""

    def __init__(self, **kw):
        self.__dict__.update(kw)


def _bench_trial(job):
    sigma, trial, a = job
    seed = a.seed + trial
    ta = _Args(**{**a.__dict__, "seed": seed, "sigma": sigma})
    if a.family == "uai-file":
        model = load_problem(ta)
    else:
        model = generate(a.family, ta)
    out = {"sigma": sigma, "trial": trial, "seed": seed, "algs": {}}
    for alg in a.algs:
        rep = solve(model, alg, ta)
        out["algs"][alg] = {"q": rep.q_value, "bound": rep.bound, "bound_valid": rep.bound_valid,
                            "converged": bool(rep.converged), "wall_time_ms": rep.wall_time_ms,
                            "decode": [int(v) for v in rep.decode]}
    if a.reference == "oracle":
        out["reference"] = float(marginal_map_exact(model, a.cap)[1])
    else:
        qs = [r["q"] for r in out["algs"].values() if r["q"] is not None]
        out["reference"] = max(qs) if qs else None
    return out


def summarize(results: List[dict], sigmas, algs) -> List[dict]:
    rows = []
    for s in sigmas:
        trials = [r for r in results if r["sigma"] == s]
        for alg in algs:
            succ, errs, gaps, conv = [], [], [], []
            for r in trials:
                x = r["algs"][alg]
                ref = r["reference"]
                conv.append(x["converged"])
                if x["q"] is None or ref is None:
                    continue
                err = max(ref - x["q"], 0.0)
                errs.append(err)
                succ.append(err <= SUCCESS_TOL)
                if x["bound"] is not None and x["bound_valid"]:
                    gaps.append(x["bound"] - ref)
            rows.append({"sigma": s, "algorithm": alg, "trials": len(trials),
                         "success_rate": float(np.mean(succ)) if succ else None,
                         "mean_rel_error": float(np.mean(errs)) if errs else None,
                         "mean_bound_gap": float(np.mean(gaps)) if gaps else None,
                         "bound_rows": len(gaps),
                         "converged_rate": float(np.mean(conv)) if conv else None})
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = CSV_SCHEMA.split(": ", 1)[1].split(",")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def _parse_list(text: str, conv, what: str):
    try:
        vals = [conv(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse {what} list {text!r}") from None
    if not vals:
        raise UsageError(f"empty {what} list")
    return vals


def cmd_bench(a) -> int:
    sigmas = _parse_list(a.sigmas, float, "sigma")
    if any(s <= 0 for s in sigmas):
        raise UsageError("sigma values must be positive")
    if a.trials < 1:
        raise UsageError("trials must be at least 1")
    if a.jobs < 1:
        raise UsageError("jobs must be at least 1")
    algs = _parse_list(a.algs, str, "algorithm")
    bad = [x for x in algs if x not in ALGORITHMS]
    if bad:
        raise UsageError(f"unknown algorithms {bad}")
    if a.family == "uai-file":
        sigmas, a.trials = [0.0], 1
        _read(a.model, "model")
        _read(a.query, "query")
    fields = dict(a.__dict__)
    fields.pop("func", None)
    fields["algs"] = algs
    shared = _Args(**fields)
    jobs = [(s, t, shared) for s in sigmas for t in range(a.trials)]
    if a.jobs > 1:
        with ProcessPoolExecutor(max_workers=a.jobs) as ex:
            results = list(ex.map(_bench_trial, jobs))
    else:
        results = [_bench_trial(j) for j in jobs]
    rows = summarize(results, sigmas, algs)
    summary = {"schema": CSV_SCHEMA[2:], "family": a.family, "sigmas": sigmas, "trials": a.trials,
               "algorithms": algs, "seed_base": a.seed, "reference": a.reference, "rows": rows,
               "wall_time_ms": {alg: float(np.mean([r["algs"][alg]["wall_time_ms"] for r in results]))
                                for alg in algs}}
    text_csv = rows_to_csv(rows)
    text_json = json.dumps(summary, sort_keys=True, indent=2) + "\n"
    if a.out:
        base = os.path.splitext(a.out)[0] if a.out.endswith((".csv", ".json")) else a.out
        with open(base + ".csv", "w") as fh:
            fh.write(text_csv)
        with open(base + ".json", "w") as fh:
            fh.write(text_json)
    else:
        sys.stdout.write(text_csv if a.format == "csv" else text_json)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _damping(text):
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1)")
    return v


def _common(p, alg_default="mixed-bethe"):
    p.add_argument("--alg", choices=ALGORITHMS, default=alg_default)
    p.add_argument("--max-iters", type=_nonneg_int, default=None)
    p.add_argument("--damping", type=_damping, default=None)
    p.add_argument("--inits", type=_nonneg_int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="marginalmap", description="Marginal MAP inference by message passing.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("solve", help="solve one model file")
    s.add_argument("--model", required=True)
    s.add_argument("--query")
    s.add_argument("--evid")
    _common(s)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("check", help="fixed-point residuals of a message-passing run")
    c.add_argument("--model", required=True)
    c.add_argument("--query")
    c.add_argument("--evid")
    c.add_argument("--perturb", action="store_true", help="perturb the beliefs before checking")
    _common(c)
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("gen", help="write a generated model and its query file")
    g.add_argument("family", choices=FAMILIES)
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--side", type=int, default=10)
    g.add_argument("--pattern", default="sum-loopy")
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--card", type=int, default=3)
    g.add_argument("--max-leaves", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None, help="output prefix for .uai and .query")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="success rates and errors over seeded trials")
    b.add_argument("--family", choices=FAMILIES + ("uai-file",), default="hmm")
    b.add_argument("--model")
    b.add_argument("--query")
    b.add_argument("--evid")
    b.add_argument("--n", type=int, default=None)
    b.add_argument("--side", type=int, default=10)
    b.add_argument("--pattern", default="sum-loopy")
    b.add_argument("--card", type=int, default=3)
    b.add_argument("--max-leaves", type=int, default=None)
    b.add_argument("--sigmas", default=",".join(f"{0.1 * k:.1f}" for k in range(1, 21)))
    b.add_argument("--trials", type=int, default=100)
    b.add_argument("--algs", default="mixed-bethe,proximal-bethe,taboo")
    b.add_argument("--reference", choices=("oracle", "best"), default="oracle")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--max-iters", type=_nonneg_int, default=None)
    b.add_argument("--damping", type=_damping, default=None)
    b.add_argument("--inits", type=_nonneg_int, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--cap", type=int, default=DEFAULT_CAP)
    b.add_argument("--out", default=None, help="output prefix for .csv and .json")
    b.add_argument("--format", choices=("json", "csv"), default="csv")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return a.func(a)
    except UsageError as exc:
        print(f"marginalmap: error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except ParseError as exc:
        print(f"marginalmap: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ResourceLimitError as exc:
        print(f"marginalmap: resource limit: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
