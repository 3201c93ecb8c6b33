"""Transit-point discovery and pair distance upper bounds.

For two traces from the same origin, the last common hop acts as a transit
point; composing the two path tails through it bounds the hop count and RTT
between the destinations from above.  Minimizing those bounds over several
origins tightens the estimate.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .model import (
    PairEstimate,
    RejectKind,
    RejectReason,
    TracePath,
    TransitPoint,
)

HOST = "host"
ACCESS_ROUTER = "access_router"


@dataclass(frozen=True)
class EstimateOptions:
    mode: str = ACCESS_ROUTER
    allow_origin_fallback: bool = False
    eps_rtt: float = 0.0
    couple_metrics: bool = False


@dataclass
class PairOutcome:
    pair: tuple[str, str]
    per_origin: dict[str, PairEstimate | RejectReason]
    best_hop: PairEstimate | None = None
    best_rtt: PairEstimate | None = None

    @property
    def accepted(self) -> bool:
        return self.best_hop is not None or self.best_rtt is not None


@dataclass
class BatchStats:
    total_pairs: int
    succeeded: int
    reject_counts: Counter = field(default_factory=Counter)

    @property
    def success_ratio(self) -> float:
        return self.succeeded / self.total_pairs if self.total_pairs else 0.0


def endpoint_of(trace: TracePath, mode: str = ACCESS_ROUTER) -> int:
    """1-based hop position of the distance endpoint for this trace.

    ``host`` mode uses the destination hop itself; ``access_router`` mode uses
    the last responsive hop strictly before it, falling back to the
    destination hop when no such hop exists.
    """
    if not trace.reached:
        raise ValueError("endpoint_of requires a reached trace")
    n = len(trace.hops)
    if mode == HOST:
        return n
    if mode != ACCESS_ROUTER:
        raise ValueError(f"unknown endpoint mode {mode!r}")
    for pos in range(n - 1, 0, -1):
        if trace.hop(pos).responsive:
            return pos
    return n


def last_common_hop(
    path_a: TracePath,
    path_b: TracePath,
    allow_origin_fallback: bool = False,
    limit_a: int | None = None,
    limit_b: int | None = None,
) -> TransitPoint | RejectReason:
    """Find the transit point for two traces sharing an origin.

    Among addresses responsive in both paths (up to the optional position
    limits) the one maximizing index_a + index_b wins; ties go to the larger
    index_a, then the lexicographically smaller address.  Without a common
    address the origin itself may serve as a (loose) transit at (0, 0).
    """
    if path_a.origin_id != path_b.origin_id:
        raise ValueError(
            f"traces from different origins: {path_a.origin_id} vs {path_b.origin_id}"
        )
    for path in (path_a, path_b):
        if not path.reached:
            return RejectReason(
                RejectKind.UNREACHABLE_DESTINATION,
                f"destination {path.destination} not reached",
            )
    limit_a = len(path_a.hops) if limit_a is None else limit_a
    limit_b = len(path_b.hops) if limit_b is None else limit_b

    # deepest position of each responsive address within the limits
    pos_a: dict[str, int] = {}
    for pos in range(1, limit_a + 1):
        hop = path_a.hop(pos)
        if hop.responsive:
            pos_a[hop.address] = pos
    best: TransitPoint | None = None
    best_key = None
    for pos in range(1, limit_b + 1):
        hop = path_b.hop(pos)
        if not hop.responsive or hop.address not in pos_a:
            continue
        ia = pos_a[hop.address]
        key = (ia + pos, ia, _neg_lex(hop.address))
        if best_key is None or key > best_key:
            best_key = key
            best = TransitPoint(address=hop.address, index_a=ia, index_b=pos)
    if best is not None:
        return best
    if allow_origin_fallback:
        return TransitPoint(address=None, index_a=0, index_b=0, is_origin_fallback=True)
    return RejectReason(RejectKind.NO_TRANSIT, "no common responsive hop")


def _neg_lex(address: str):
    # tuple of negated ordinals so "smaller address" sorts as the larger key
    return tuple(-ord(c) for c in address)


def validate_beyond_transit(
    trace: TracePath,
    transit_pos: int,
    endpoint_pos: int,
    eps_rtt: float = 0.0,
) -> RejectReason | None:
    """Check the path segment from transit to endpoint; None means accepted.

    Cumulative RTT over responsive hops must be non-decreasing within
    ``eps_rtt`` (a decrease signals route asymmetry) and no address may
    repeat (a routing loop).  transit_pos 0 means origin fallback and
    validates the whole path.
    """
    if not (0 <= transit_pos <= endpoint_pos <= len(trace.hops)):
        raise ValueError(
            f"bad segment [{transit_pos}, {endpoint_pos}] in a "
            f"{len(trace.hops)}-hop trace"
        )
    if transit_pos >= 1 and trace.hop(transit_pos).rtt_ms is None:
        return RejectReason(
            RejectKind.MISSING_RTT_AT_TRANSIT,
            f"no rtt at transit hop {transit_pos}",
        )
    prev_rtt = None
    seen: set[str] = set()
    for pos in range(max(transit_pos, 1), endpoint_pos + 1):
        hop = trace.hop(pos)
        if not hop.responsive:
            continue
        if hop.address in seen:
            return RejectReason(
                RejectKind.LOOP_BEYOND_TRANSIT,
                f"address {hop.address} repeats at hop {pos}",
            )
        seen.add(hop.address)
        if hop.rtt_ms is not None:
            if prev_rtt is not None and hop.rtt_ms < prev_rtt - eps_rtt:
                return RejectReason(
                    RejectKind.ASYMMETRY_SUSPECTED,
                    f"cumulative rtt drops {prev_rtt} -> {hop.rtt_ms} at hop {pos}",
                )
            prev_rtt = hop.rtt_ms
    return None


def estimate_pair(
    path_a: TracePath,
    path_b: TracePath,
    options: EstimateOptions = EstimateOptions(),
) -> PairEstimate | RejectReason:
    """Upper-bound the distance between two destinations seen from one origin.

    Symmetric in its two paths: the pair is canonicalized by destination
    address before any tie-breaking happens.
    """
    if path_a.destination > path_b.destination:
        path_a, path_b = path_b, path_a
    try:
        n_a = endpoint_of(path_a, options.mode)
        n_b = endpoint_of(path_b, options.mode)
    except ValueError:
        bad = path_a if not path_a.reached else path_b
        return RejectReason(
            RejectKind.UNREACHABLE_DESTINATION,
            f"destination {bad.destination} not reached",
        )
    transit = last_common_hop(
        path_a,
        path_b,
        allow_origin_fallback=options.allow_origin_fallback,
        limit_a=n_a,
        limit_b=n_b,
    )
    if isinstance(transit, RejectReason):
        return transit
    # validate the whole remaining path, not just up to the endpoint: a
    # cumulative RTT decrease between the access router and the destination
    # still signals asymmetry on the segment the tail RTTs depend on
    for path, t_pos in ((path_a, transit.index_a), (path_b, transit.index_b)):
        reject = validate_beyond_transit(path, t_pos, len(path.hops), options.eps_rtt)
        if reject is not None:
            return reject

    def tail_rtt(path: TracePath, t_pos: int, e_pos: int) -> float | RejectReason:
        end_rtt = path.hop(e_pos).rtt_ms
        if end_rtt is None:
            return RejectReason(
                RejectKind.MISSING_RTT_AT_TRANSIT,
                f"no rtt at endpoint hop {e_pos} of {path.destination}",
            )
        start_rtt = 0.0 if t_pos == 0 else path.hop(t_pos).rtt_ms
        diff = end_rtt - start_rtt
        if diff < 0:
            return RejectReason(
                RejectKind.ASYMMETRY_SUSPECTED,
                f"negative rtt difference {diff} on tail to {path.destination}",
            )
        return diff

    rtt_a = tail_rtt(path_a, transit.index_a, n_a)
    if isinstance(rtt_a, RejectReason):
        return rtt_a
    rtt_b = tail_rtt(path_b, transit.index_b, n_b)
    if isinstance(rtt_b, RejectReason):
        return rtt_b
    return PairEstimate(
        endpoint_a=path_a.destination,
        endpoint_b=path_b.destination,
        origin_id=path_a.origin_id,
        transit=transit,
        hop_bound=(n_a - transit.index_a) + (n_b - transit.index_b),
        rtt_bound_ms=rtt_a + rtt_b,
    )


def _accepted(per_origin):
    return [
        (origin, est)
        for origin, est in per_origin.items()
        if isinstance(est, PairEstimate)
    ]


def min_over_origins(
    pair: tuple[str, str],
    per_origin: dict[str, PairEstimate | RejectReason],
    couple_metrics: bool = False,
) -> PairOutcome:
    """Select the minimal upper bounds over all origins, per metric.

    Hop and RTT bounds are minimized independently (each is a valid bound on
    its own); ``couple_metrics`` forces both to come from the hop winner.
    """
    if not per_origin:
        raise ValueError("min_over_origins needs at least one origin entry")
    accepted = _accepted(per_origin)
    best_hop = best_rtt = None
    if accepted:
        best_hop = min(
            accepted, key=lambda kv: (kv[1].hop_bound, kv[1].rtt_bound_ms, kv[0])
        )[1]
        if couple_metrics:
            best_rtt = best_hop
        else:
            best_rtt = min(
                accepted, key=lambda kv: (kv[1].rtt_bound_ms, kv[1].hop_bound, kv[0])
            )[1]
    return PairOutcome(pair=pair, per_origin=dict(per_origin), best_hop=best_hop, best_rtt=best_rtt)


def batch_estimate(
    traces_by_origin: dict[str, list[TracePath]],
    pairs: list[tuple[str, str]],
    options: EstimateOptions = EstimateOptions(),
) -> tuple[list[PairOutcome], BatchStats]:
    """Estimate every pair from every origin and minimize per pair.

    A pair endpoint with no trace from an origin yields a NoTransit reject
    with detail "no trace" for that origin; it never aborts the batch.
    """
    index: dict[str, dict[str, TracePath]] = {}
    for origin, traces in traces_by_origin.items():
        by_dest = index.setdefault(origin, {})
        for trace in traces:
            # prefer a reached trace when several target the same destination
            existing = by_dest.get(trace.destination)
            if existing is None or (trace.reached and not existing.reached):
                by_dest[trace.destination] = trace

    outcomes = []
    stats = BatchStats(total_pairs=len(pairs), succeeded=0)
    for a, b in pairs:
        per_origin: dict[str, PairEstimate | RejectReason] = {}
        for origin in sorted(index):
            ta = index[origin].get(a)
            tb = index[origin].get(b)
            if ta is None or tb is None:
                per_origin[origin] = RejectReason(RejectKind.NO_TRANSIT, "no trace")
            else:
                per_origin[origin] = estimate_pair(ta, tb, options)
        outcome = min_over_origins(
            (min(a, b), max(a, b)), per_origin, options.couple_metrics
        )
        outcomes.append(outcome)
        if outcome.accepted:
            stats.succeeded += 1
        for est in per_origin.values():
            if isinstance(est, RejectReason):
                stats.reject_counts[est.kind.value] += 1
    return outcomes, stats


# ---------------------------------------------------------------------------
# line-delimited outcome export, consumed by stats and the CLI


def _estimate_to_obj(est: PairEstimate | RejectReason):
    if isinstance(est, PairEstimate):
        return {
            "hop_bound": est.hop_bound,
            "rtt_bound_ms": est.rtt_bound_ms,
            "transit": [est.transit.address, est.transit.index_a, est.transit.index_b],
            "origin_fallback": est.transit.is_origin_fallback,
        }
    return {"reject": est.kind.value, "detail": est.detail}


def _estimate_from_obj(obj, pair, origin):
    if "reject" in obj:
        return RejectReason(RejectKind(obj["reject"]), obj.get("detail", ""))
    addr, ia, ib = obj["transit"]
    transit = TransitPoint(
        address=addr, index_a=ia, index_b=ib,
        is_origin_fallback=obj.get("origin_fallback", False),
    )
    return PairEstimate(
        endpoint_a=pair[0], endpoint_b=pair[1], origin_id=origin,
        transit=transit, hop_bound=obj["hop_bound"], rtt_bound_ms=obj["rtt_bound_ms"],
    )


def write_outcomes(outcomes: list[PairOutcome], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for oc in outcomes:
            record = {
                "pair": list(oc.pair),
                "per_origin": {
                    origin: _estimate_to_obj(oc.per_origin[origin])
                    for origin in sorted(oc.per_origin)
                },
                "best_hop": None if oc.best_hop is None else _estimate_to_obj(oc.best_hop),
                "best_hop_origin": None if oc.best_hop is None else oc.best_hop.origin_id,
                "best_rtt": None if oc.best_rtt is None else _estimate_to_obj(oc.best_rtt),
                "best_rtt_origin": None if oc.best_rtt is None else oc.best_rtt.origin_id,
            }
            fh.write(json.dumps(record, separators=(",", ":")))
            fh.write("\n")


def read_outcomes(path: str | Path) -> list[PairOutcome]:
    outcomes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pair = tuple(rec["pair"])
                per_origin = {
                    origin: _estimate_from_obj(obj, pair, origin)
                    for origin, obj in rec["per_origin"].items()
                }
                best_hop = best_rtt = None
                if rec["best_hop"] is not None:
                    best_hop = _estimate_from_obj(rec["best_hop"], pair, rec["best_hop_origin"])
                if rec["best_rtt"] is not None:
                    best_rtt = _estimate_from_obj(rec["best_rtt"], pair, rec["best_rtt_origin"])
                outcomes.append(
                    PairOutcome(pair=pair, per_origin=per_origin,
                                best_hop=best_hop, best_rtt=best_rtt)
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: bad outcome at line {lineno}: {exc}") from exc
    return outcomes
