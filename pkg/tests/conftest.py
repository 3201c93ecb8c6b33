import pytest

from edgedist.model import HopRecord, TracePath
from edgedist.synth import Topology


def make_topology(edge_list, hosts, seed=0):
    """Build a symmetric topology from (u, v, latency) triples.

    ``hosts`` maps host name -> (router, attach_latency).
    """
    edges = {}
    nodes = []
    seen = set()

    def add_node(n):
        if n not in seen:
            seen.add(n)
            nodes.append(n)

    for u, v, lat in edge_list:
        add_node(u)
        add_node(v)
        edges[(u, v)] = lat
        edges[(v, u)] = lat
    attachment = {}
    for host, (router, lat) in hosts.items():
        add_node(host)
        edges[(host, router)] = lat
        edges[(router, host)] = lat
        attachment[host] = router
    return Topology(nodes=tuple(nodes), edges=edges, host_attachment=attachment, seed=seed)


def trace(origin, dest, hops, reached=True):
    """Shorthand: hops as (address-or-None, rtt-or-None) in TTL order."""
    records = tuple(
        HopRecord(ttl=i, address=addr, rtt_ms=rtt)
        for i, (addr, rtt) in enumerate(hops, start=1)
    )
    return TracePath(origin_id=origin, destination=dest, hops=records, reached=reached)
