"""Command-line surface: ingest -> pairs -> dist -> handover, plus simulate.

Exit codes: 0 clean, 1 partial (warnings or nothing accepted), 2 fatal.
All outputs are written to a temporary file first and renamed on success, so
a fatal error never leaves a partial file behind.  All randomness flows from
explicit --seed flags.
"""

from __future__ import annotations

import argparse
import itertools
import os
import random
import sys
import tempfile
from pathlib import Path

from . import geo, handover, ingest, stats, synth, transit

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2


def _atomic_write(path: str | Path, text: str) -> None:
    _atomic_via(path, lambda tmp: Path(tmp).write_text(text, encoding="utf-8"))


def _atomic_via(path: str | Path, writer) -> None:
    """Run writer(tmp_path) and rename into place only on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _parse_kv(spec: str) -> dict[str, str]:
    out = {}
    if spec:
        for item in spec.split(","):
            key, _, value = item.partition("=")
            if not value:
                raise ValueError(f"expected key=value, got {item!r}")
            out[key.strip()] = value.strip()
    return out


def _parse_grid(spec: str) -> list[float]:
    try:
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError as exc:
        raise ValueError(f"grid must be start:stop:step, got {spec!r}") from exc
    if step <= 0 or stop < start:
        raise ValueError(f"bad grid {spec!r}")
    grid = []
    value = start
    while value <= stop + 1e-9:
        grid.append(round(value, 9))
        value += step
    return grid


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    traces = []
    report = ingest.ParseReport()
    for input_path in args.inputs:
        if args.format == "canonical":
            traces.extend(ingest.read_canonical(input_path))
        else:
            text = Path(input_path).read_text(encoding="utf-8")
            parsed, sub = ingest.parse_traceroute_text(text, args.origin)
            traces.extend(parsed)
            report.parsed += sub.parsed
            report.skipped_lines += sub.skipped_lines
            report.warnings.extend(sub.warnings)
    _atomic_via(args.output, lambda p: ingest.write_canonical(traces, p))
    _say(args, f"wrote {len(traces)} traces to {args.output}")
    if report.skipped_lines or report.warnings:
        _say(
            args,
            f"parsed={report.parsed} skipped_lines={report.skipped_lines} "
            f"warnings={len(report.warnings)}",
        )
        for warning in report.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _load_pairs_file(path: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line.lower().startswith("a,"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ValueError(f"{path}: line {lineno}: expected two columns")
        pairs.append((parts[0], parts[1]))
    return pairs


def _estimate_options(args) -> transit.EstimateOptions:
    return transit.EstimateOptions(
        mode=args.mode,
        allow_origin_fallback=args.allow_origin_fallback,
        eps_rtt=args.eps_rtt,
        couple_metrics=getattr(args, "couple_metrics", False),
    )


def cmd_pairs(args) -> int:
    traces_by_origin: dict[str, list] = {}
    for path in args.traces:
        for trace in ingest.read_canonical(path):
            traces_by_origin.setdefault(trace.origin_id, []).append(trace)
    if not traces_by_origin:
        print("error: no traces in input", file=sys.stderr)
        return EXIT_FATAL
    if args.pairs_file:
        pairs = _load_pairs_file(args.pairs_file)
    else:
        destinations = sorted(
            {
                t.destination
                for rows in traces_by_origin.values()
                for t in rows
                if t.reached
            }
        )
        pairs = list(itertools.combinations(destinations, 2))
    if args.max_pairs is not None and len(pairs) > args.max_pairs:
        rng = random.Random(args.seed)
        pairs = [pairs[i] for i in sorted(rng.sample(range(len(pairs)), args.max_pairs))]
    outcomes, batch = transit.batch_estimate(traces_by_origin, pairs, _estimate_options(args))
    _atomic_via(args.output, lambda p: transit.write_outcomes(outcomes, p))
    _say(args, f"pairs={batch.total_pairs} succeeded={batch.succeeded} "
               f"success_ratio={batch.success_ratio:.2f}")
    total_rejects = sum(batch.reject_counts.values())
    for kind in sorted(batch.reject_counts):
        count = batch.reject_counts[kind]
        _say(args, f"  reject {kind}: {count} ({count / total_rejects:.1%})")
    if batch.succeeded == 0:
        print("error: no pair obtained a valid estimate", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_dist(args) -> int:
    outcomes = transit.read_outcomes(args.outcomes)
    code = EXIT_OK
    for metric, suffix, width in (
        (stats.HOP_COUNT, "hops", 1.0),
        (stats.RTT_MS, "rtt", args.rtt_bin_width),
    ):
        dist = stats.build_distribution(outcomes, metric, width)
        out_path = f"{args.output}.{suffix}.tsv"
        _atomic_via(out_path, lambda p, d=dist: stats.write_distribution_tsv(d, p))
        _say(args, f"{metric}: n={dist.n} mean={dist.mean:.4f} std={dist.std:.4f} "
                   f"excluded={dist.excluded} -> {out_path}")
        if args.baseline:
            base = stats.build_distribution(
                transit.read_outcomes(args.baseline), metric, width
            )
            mean_shift, ks = stats.compare_distributions(dist, base)
            _say(args, f"{metric} vs baseline: mean_shift={mean_shift:.4f} ks={ks:.4f}")
        if args.stability:
            subset, _, trials = args.stability.partition(":")
            mean_dev, std_dev = stats.resample_stability(
                outcomes, int(subset), int(trials or 2), args.seed, metric, width
            )
            _say(args, f"{metric} stability ({subset} x {trials}): "
                       f"max_mean_dev={mean_dev:.4f} max_std_dev={std_dev:.4f}")
    return code


def _load_rtt_distribution(args):
    if args.outcomes:
        outcomes = transit.read_outcomes(args.outcomes)
        return stats.build_distribution(outcomes, stats.RTT_MS, args.rtt_bin_width)
    if args.dist_tsv:
        return stats.read_distribution_tsv(args.dist_tsv)
    raise ValueError("need --outcomes or --dist-tsv for the RTT distribution")


def cmd_handover(args) -> int:
    if args.loss_table:
        model = handover.LossModel(
            kind=handover.TABLE, table=handover.load_loss_table(args.loss_table)
        )
    else:
        model = handover.LossModel(beta=args.beta)
    rtt_dist = _load_rtt_distribution(args)
    grid = _parse_grid(args.grid)
    curve = handover.expected_loss_curve(rtt_dist, model, grid, args.delay_scale)
    lines = ["anticipation_ms\texpected_loss_ms\texpected_packets"]
    for a, loss, packets in curve:
        lines.append(f"{a:g}\t{loss!r}\t{packets!r}")
    _atomic_write(args.output, "".join(line + "\n" for line in lines))
    optimum = handover.argmin_anticipation(curve, args.flat_threshold)
    if optimum.flat:
        _say(args, "argmin: flat curve, no significant anticipation optimum")
    else:
        _say(args, f"argmin: anticipation={optimum.anticipation_ms:g} ms "
                   f"expected_loss={optimum.expected_loss_ms:.4f} ms")
    if args.persistence:
        table = handover.load_persistence_table(args.persistence)
        if args.hops_tsv:
            hop_dist = stats.read_distribution_tsv(args.hops_tsv)
        elif args.outcomes:
            hop_dist = stats.build_distribution(
                transit.read_outcomes(args.outcomes), stats.HOP_COUNT
            )
        else:
            raise ValueError("persistence needs --hops-tsv or --outcomes")
        ratio = handover.multicast_persistence(hop_dist, table)
        _say(args, f"expected multicast persistence: {ratio:.4f} "
                   f"(invalidation {1 - ratio:.4f})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _parse_kv(args.params)
    inject = _parse_kv(args.inject)
    topology = synth.generate_topology(
        args.model,
        {k: float(v) if "." in v else int(v) for k, v in params.items()},
        args.seed,
    )
    rng = random.Random(args.seed)
    routers = topology.routers
    hosts = topology.hosts
    n_origins = min(args.origins, len(routers))
    origins = sorted(rng.sample(routers, n_origins))
    all_pairs = list(itertools.combinations(hosts, 2))
    n_pairs = min(args.pairs, len(all_pairs))
    pairs = [all_pairs[i] for i in sorted(rng.sample(range(len(all_pairs)), n_pairs))]
    options = synth.SimOptions(
        block_probability=float(inject.get("block", 0.0)),
        asymmetry_probability=float(inject.get("asymmetry", 0.0)),
        asymmetry_delta_ms=float(inject.get("delta", 50.0)),
        loop_probability=float(inject.get("loops", 0.0)),
        rtt_jitter_ms=float(inject.get("jitter", 0.0)),
        seed=args.seed,
    )
    report = synth.run_experiment(
        topology, origins, pairs, options, _estimate_options(args)
    )
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    _atomic_via(outdir / "topology.jsonl", lambda p: synth.save_topology(topology, p))
    sim = synth.Simulator(topology, options)
    targets = sorted({h for pair in pairs for h in pair})
    for origin in origins:
        traces = [sim.trace(origin, host)[0] for host in targets]
        _atomic_via(outdir / f"traces_{origin}.jsonl",
                    lambda p, t=traces: ingest.write_canonical(t, p))
    _atomic_write(outdir / "pairs.csv",
                  "".join(f"{a},{b}\n" for a, b in pairs))
    _atomic_write(outdir / "report.tsv", report.to_text())
    _say(args, f"model={args.model} routers={len(routers)} hosts={len(hosts)} "
               f"origins={len(origins)} pairs={len(pairs)}")
    _say(args, f"success_ratio={report.stats.success_ratio:.2f} "
               f"soundness_violations={report.soundness_violations} "
               f"tight_hits={report.tight_hits}")
    _say(args, f"outputs in {outdir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_estimate_flags(parser):
    parser.add_argument("--mode", choices=[transit.HOST, transit.ACCESS_ROUTER],
                        default=transit.ACCESS_ROUTER)
    parser.add_argument("--allow-origin-fallback", action="store_true")
    parser.add_argument("--eps-rtt", type=float, default=0.0,
                        help="tolerance for cumulative RTT decreases, ms")
    parser.add_argument("--couple-metrics", action="store_true",
                        help="take both best bounds from the hop-minimal origin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgedist",
        description="Edge network distance estimation and handover analysis",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse traceroute output to canonical records")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=["traceroute-text", "canonical"],
                   default="traceroute-text")
    p.add_argument("--origin", default="origin", help="scanning origin label")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pairs", help="estimate pair distance bounds")
    p.add_argument("--traces", nargs="+", required=True,
                   help="canonical trace files, one or more origins")
    p.add_argument("--pairs-file", help="CSV with one endpoint pair per line")
    p.add_argument("--max-pairs", type=int,
                   help="seeded subsample when the pair list is larger")
    _add_estimate_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("dist", help="build edge distance distributions")
    p.add_argument("--outcomes", required=True)
    p.add_argument("--rtt-bin-width", type=float, default=5.0)
    p.add_argument("--baseline", help="outcome file of the random baseline")
    p.add_argument("--stability", metavar="SUBSET:TRIALS",
                   help="resampling stability check, e.g. 500:20")
    p.add_argument("-o", "--output", required=True, help="output path prefix")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("handover", help="expected loss curve and persistence")
    p.add_argument("--outcomes")
    p.add_argument("--dist-tsv", help="RTT distribution TSV instead of outcomes")
    p.add_argument("--rtt-bin-width", type=float, default=5.0)
    p.add_argument("--grid", default="0:100:5", help="anticipation grid start:stop:step")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--delay-scale", type=float, default=0.5)
    p.add_argument("--flat-threshold", type=float, default=0.05)
    p.add_argument("--loss-table", help="CSV loss table instead of the default model")
    p.add_argument("--persistence", help="CSV hop,persist_ratio table")
    p.add_argument("--hops-tsv", help="hop distribution TSV for persistence")
    p.add_argument("-o", "--output", required=True, help="curve TSV path")
    p.set_defaults(func=cmd_handover)

    p = sub.add_parser("simulate", help="synthetic topology experiment")
    p.add_argument("--model", choices=[synth.RING_OF_STARS, synth.RANDOM_GEOMETRIC,
                                       synth.TWO_TIER], default=synth.TWO_TIER)
    p.add_argument("--params", default="", help="model parameters, k=v[,k=v...]")
    p.add_argument("--origins", type=int, default=5)
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--inject", default="",
                   help="fault injection: asymmetry=,delta=,loops=,block=,jitter=")
    _add_estimate_flags(p)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
