"""Command-line front end: topology reports, bound evaluation, experiment campaigns.

Campaign cells fan out over a thread pool whose size is capped by the
RANKTOPO_THREADS environment variable; per-row seeds are derived up front
from the base seed, so scheduling never changes the numbers.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bounds import BoundConstants, cvo_decision, fano_pipeline, minimax_bounds
from .estimate import (SolverOptions, error_metrics, mean_cardinal, mle_mwise,
                       mle_ordinal)
from .graph import (PAIRWISE_KINDS, HyperDesign, build_topology, optimality_report,
                    parse_kind, spectrum)
from .models import make_link, model_params, plackett_luce
from .synth import CardinalModel, even_allocation, gen_quality, sample_comparisons, sample_outcomes

CSV_HEADER = "topology,d,n,trial,seed,sq_l2,sq_lap,rescaled,converged,runtime_ms"


def _pool_size(requested: int | None) -> int:
    cap = os.environ.get("RANKTOPO_THREADS")
    size = requested if requested else (os.cpu_count() or 1)
    if cap:
        size = min(size, max(int(cap), 1))
    return max(size, 1)


def row_seed(base_seed: int, cell_index: int, trial: int) -> int:
    """Stable per-row seed; every CSV row can be replayed from it alone."""
    ss = np.random.SeedSequence(entropy=[int(base_seed), int(cell_index), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ExperimentConfig:
    kinds: list[str]
    d_list: list[int]
    n_list: list[int]
    family: str = "thurstone"
    sigma: float = 1.0
    B: float = 1.0
    m: int = 2
    w_gen: str = "uniform"
    w_variant: str = "pinv"
    trials: int = 40
    base_seed: int = 0
    out: str = "results.csv"

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.kinds or not self.d_list or not self.n_list:
            raise ValueError("kinds, d and n lists must be non-empty")
        if self.family not in ("thurstone", "btl", "plackett_luce"):
            raise ValueError(f"unknown model family {self.family!r}")
        if self.w_gen not in ("gaussian", "uniform", "packing"):
            raise ValueError(f"unknown quality generator {self.w_gen!r}")
        if self.family == "plackett_luce":
            if self.m < 2:
                raise ValueError("m-wise campaigns need m >= 2")
            for kind in self.kinds:
                if parse_kind(kind)[0] != "complete":
                    raise ValueError(
                        "m-wise campaigns support only the complete hyper-design"
                    )
        for kind in self.kinds:
            for d in self.d_list:
                build_topology(kind, d)  # raises on incompatible dimensions


def run_trial(kind: str, d: int, n: int, family: str, sigma: float, B: float,
              m: int, w_gen: str, seed: int, w_variant: str = "pinv",
              opts: SolverOptions = SolverOptions()) -> dict:
    """One campaign cell trial, reproducible from its integer seed."""
    design = build_topology(kind, d)
    rng = np.random.default_rng(seed)
    w_star = gen_quality(w_gen, d, B, rng, design=design, variant=w_variant)
    start = time.perf_counter()
    if family == "plackett_luce":
        hyper = HyperDesign(d=d, m=m,
                            subsets=tuple(itertools.combinations(range(d), m)))
        link = plackett_luce(m, B)
        comps = sample_comparisons(hyper, n, rng)
        batch = sample_outcomes(link, w_star, hyper, comps, rng)
        result = mle_mwise(batch, hyper, link, B, opts)
        summary = spectrum(design)
    else:
        link = make_link(family, sigma)
        comps = sample_comparisons(design, n, rng)
        batch = sample_outcomes(link, w_star, design, comps, rng)
        result = mle_ordinal(batch, design, link, B, opts)
        summary = spectrum(design)
    runtime_ms = (time.perf_counter() - start) * 1000.0
    metrics = error_metrics(result.w_hat, w_star, summary)
    return {
        "topology": kind, "d": d, "n": n, "seed": seed,
        "sq_l2": metrics.sq_l2, "sq_lap": metrics.sq_lap,
        "rescaled": n * metrics.sq_l2 / (d * d),
        "converged": result.converged, "runtime_ms": runtime_ms,
    }


def run_campaign(config: ExperimentConfig, threads: int | None = None,
                 log=sys.stderr) -> list[dict]:
    config.validate()
    cells = [(kind, d, n) for kind in config.kinds
             for d in config.d_list for n in config.n_list]
    jobs = []
    for cell_index, (kind, d, n) in enumerate(cells):
        for trial in range(config.trials):
            jobs.append((kind, d, n, trial, row_seed(config.base_seed, cell_index, trial)))

    def work(job):
        kind, d, n, trial, seed = job
        try:
            row = run_trial(kind, d, n, config.family, config.sigma, config.B,
                            config.m, config.w_gen, seed, config.w_variant)
        except Exception as exc:  # a failed trial must not abort the campaign
            print(f"trial failed ({kind}, d={d}, n={n}, trial={trial}): {exc}",
                  file=log)
            row = {"topology": kind, "d": d, "n": n, "seed": seed,
                   "sq_l2": float("nan"), "sq_lap": float("nan"),
                   "rescaled": float("nan"), "converged": False,
                   "runtime_ms": float("nan")}
        row["trial"] = trial
        return row

    with ThreadPoolExecutor(max_workers=_pool_size(threads)) as pool:
        rows = list(pool.map(work, jobs))
    rows.sort(key=lambda r: (r["topology"], r["d"], r["n"], r["trial"]))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r['topology']},{r['d']},{r['n']},{r['trial']},{r['seed']},"
            f"{float(r['sq_l2'])!r},{float(r['sq_lap'])!r},{float(r['rescaled'])!r},"
            f"{r['converged']},{float(r['runtime_ms']):.3f}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_spectrum(args) -> int:
    design = build_topology(args.kind, args.d, args.m1, args.m2)
    summary = spectrum(design)
    report = optimality_report(summary, args.d)
    out = {
        "kind": design.kind, "d": args.d,
        "lambda2": summary.lambda2, "trace_pinv": summary.trace_pinv,
        "ratio_r": report.ratio_r, "lb_statistic": report.lb_statistic,
        "classification": report.classification,
    }
    print(json.dumps(out))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(summary.to_csv())
    return 0


def _config_from_args(args) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
    merged = {
        "kinds": args.kind or base.get("kinds", ["complete"]),
        "d_list": args.d or base.get("d", [10]),
        "n_list": args.n or base.get("n", [1000]),
        "family": args.family or base.get("family", "thurstone"),
        "sigma": args.sigma if args.sigma is not None else base.get("sigma", 1.0),
        "B": args.B if args.B is not None else base.get("B", 1.0),
        "m": args.m if args.m is not None else base.get("m", 2),
        "w_gen": args.w_gen or base.get("w_gen", "uniform"),
        "w_variant": args.w_variant or base.get("w_variant", "pinv"),
        "trials": args.trials if args.trials is not None else base.get("trials", 40),
        "base_seed": args.seed if args.seed is not None else base.get("seed", 0),
        "out": args.out or base.get("out", "results.csv"),
    }
    return ExperimentConfig(**merged)


def cmd_simulate(args) -> int:
    config = _config_from_args(args)
    rows = run_campaign(config, threads=args.threads)
    csv_text = rows_to_csv(rows)
    if config.out == "-":
        sys.stdout.write(csv_text)
    else:
        with open(config.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"wrote {len(rows)} rows to {config.out}")
    return 0


def cmd_bounds(args) -> int:
    if args.theorem.startswith("T4"):
        if parse_kind(args.kind)[0] != "complete":
            raise ValueError("m-wise bounds support only the complete hyper-design")
        hyper = HyperDesign(d=args.d, m=args.m,
                            subsets=tuple(itertools.combinations(range(args.d), args.m)))
        report = minimax_bounds(args.theorem, hyper, plackett_luce(args.m, args.B),
                                args.n)
        print(report.to_json())
        return 0
    design = build_topology(args.kind, args.d, args.m1, args.m2)
    link = make_link(args.family, args.sigma)
    params = model_params(link, args.B)
    if args.constructive:
        variant = "l2" if args.theorem == "T2_l2" else "lap"
        value = fano_pipeline(design, params, args.n, alpha=args.alpha,
                              variant=variant, seed=args.seed)
        print(json.dumps({"constructive_lower": value, "theorem": args.theorem,
                          "kind": design.kind, "d": args.d, "n": args.n,
                          "sigma": args.sigma, "B": args.B}))
        return 0
    report = minimax_bounds(args.theorem, design, params, args.n)
    print(report.to_json())
    return 0


def cmd_design(args) -> int:
    kinds = args.kind or list(PAIRWISE_KINDS)
    rows = []
    for kind in kinds:
        try:
            design = build_topology(kind, args.d, args.m1, args.m2)
        except ValueError:
            if args.kind:  # explicitly requested kinds must be feasible
                raise
            continue
        summary = spectrum(design)
        report = optimality_report(summary, args.d)
        rows.append({
            "kind": design.kind,
            "proxy": args.d / (summary.lambda2 * args.n),
            "lambda2": summary.lambda2,
            "trace_pinv": summary.trace_pinv,
            "lb_statistic": report.lb_statistic,
            "classification": report.classification,
        })
    rows.sort(key=lambda r: (r["proxy"], r["kind"]))
    if args.json:
        print(json.dumps(rows))
        return 0
    widths = (24, 14, 12, 12, 14, 14)
    header = ("kind", "proxy", "lambda2", "tr_pinv", "lb_stat", "class")
    print("".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        cells = (r["kind"], f"{r['proxy']:.6g}", f"{r['lambda2']:.6g}",
                 f"{r['trace_pinv']:.6g}", f"{r['lb_statistic']:.6g}",
                 r["classification"])
        print("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return 0


def _empirical_cvo(sigma_ord: float, sigma_card: float, B: float, d: int,
                   n: int, trials: int, seed: int) -> dict:
    """Matched Monte-Carlo risks under even allocation."""
    design = build_topology("complete", d)
    link = make_link("thurstone", sigma_ord)
    summary = spectrum(design)
    num_pairs = len(design.edges)
    ord_risk = 0.0
    card_risk = 0.0
    for trial in range(trials):
        rng = np.random.default_rng(row_seed(seed, 0, trial))
        w_star = gen_quality("uniform", d, B, rng)
        comps = even_allocation(num_pairs, n)
        batch = sample_outcomes(link, w_star, design, comps, rng)
        est = mle_ordinal(batch, design, link, B)
        ord_risk += error_metrics(est.w_hat, w_star, summary).sq_l2
        items = even_allocation(d, n)
        cbatch = sample_outcomes(CardinalModel("item", sigma_card), w_star, None, items, rng)
        cest = mean_cardinal(cbatch, d)
        card_risk += error_metrics(cest.w_hat, w_star, summary).sq_l2
    return {"ordinal_risk": ord_risk / trials, "cardinal_risk": card_risk / trials,
            "d": d, "n": n, "trials": trials}


def cmd_cvo(args) -> int:
    report = cvo_decision(args.sigma_ord, args.sigma_card, args.B)
    out = json.loads(report.to_json())
    if args.empirical:
        out["empirical"] = _empirical_cvo(args.sigma_ord, args.sigma_card, args.B,
                                          args.d, args.n, args.trials, args.seed)
    print(json.dumps(out))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranktopo",
        description="Comparison-topology analysis, estimation experiments and minimax bounds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_spec = sub.add_parser("spectrum", help="eigenvalues and optimality of a topology")
    p_spec.add_argument("--kind", required=True)
    p_spec.add_argument("--d", type=int, required=True)
    p_spec.add_argument("--m1", type=int)
    p_spec.add_argument("--m2", type=int)
    p_spec.add_argument("--csv", help="write index,eigenvalue CSV to this path")
    p_spec.set_defaults(func=cmd_spectrum)

    p_sim = sub.add_parser("simulate", help="run a synthetic estimation campaign")
    p_sim.add_argument("--config", help="JSON config file; flags override its fields")
    p_sim.add_argument("--kind", action="append")
    p_sim.add_argument("--d", action="append", type=int)
    p_sim.add_argument("--n", action="append", type=int)
    p_sim.add_argument("--family", choices=["thurstone", "btl", "plackett_luce"])
    p_sim.add_argument("--sigma", type=float)
    p_sim.add_argument("--B", type=float)
    p_sim.add_argument("--m", type=int)
    p_sim.add_argument("--w-gen", dest="w_gen", choices=["gaussian", "uniform", "packing"])
    p_sim.add_argument("--w-variant", dest="w_variant", choices=["pinv", "sqrt_pinv"])
    p_sim.add_argument("--trials", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--out", help="output CSV path, or - for stdout")
    p_sim.add_argument("--threads", type=int)
    p_sim.set_defaults(func=cmd_simulate)

    p_bounds = sub.add_parser("bounds", help="evaluate minimax bound formulas")
    p_bounds.add_argument("--theorem", required=True,
                          choices=["T1_lap", "T2_l2", "T3_paired",
                                   "T4_mwise_lap", "T4_mwise_l2"])
    p_bounds.add_argument("--kind", required=True)
    p_bounds.add_argument("--d", type=int, required=True)
    p_bounds.add_argument("--m1", type=int)
    p_bounds.add_argument("--m2", type=int)
    p_bounds.add_argument("--m", type=int, default=3,
                          help="subset size for the m-wise bound pair")
    p_bounds.add_argument("--n", type=float, required=True)
    p_bounds.add_argument("--family", default="btl")
    p_bounds.add_argument("--sigma", type=float, default=1.0)
    p_bounds.add_argument("--B", type=float, default=1.0)
    p_bounds.add_argument("--constructive", action="store_true",
                          help="run the Fano proof pipeline instead of the formulas")
    p_bounds.add_argument("--alpha", type=float, default=0.01)
    p_bounds.add_argument("--seed", type=int, default=0)
    p_bounds.set_defaults(func=cmd_bounds)

    p_design = sub.add_parser("design", help="rank topologies for a comparison budget")
    p_design.add_argument("--d", type=int, required=True)
    p_design.add_argument("--n", type=float, required=True)
    p_design.add_argument("--kind", action="append",
                          help="repeatable; defaults to every feasible kind")
    p_design.add_argument("--m1", type=int)
    p_design.add_argument("--m2", type=int)
    p_design.add_argument("--json", action="store_true")
    p_design.set_defaults(func=cmd_design)

    p_cvo = sub.add_parser("cvo", help="cardinal-versus-ordinal elicitation decision")
    p_cvo.add_argument("--sigma-ord", dest="sigma_ord", type=float, required=True)
    p_cvo.add_argument("--sigma-card", dest="sigma_card", type=float, required=True)
    p_cvo.add_argument("--B", type=float, default=1.0)
    p_cvo.add_argument("--empirical", action="store_true")
    p_cvo.add_argument("--d", type=int, default=6)
    p_cvo.add_argument("--n", type=int, default=600)
    p_cvo.add_argument("--trials", type=int, default=100)
    p_cvo.add_argument("--seed", type=int, default=0)
    p_cvo.set_defaults(func=cmd_cvo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
