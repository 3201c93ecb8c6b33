"""Geographic prefix database, city clustering and seeded sampling.

The database is trusted external input (GeoIP-style CSV); quality of the
geolocation itself is out of scope, provenance travels in ``source_tag``.
"""

from __future__ import annotations

import csv
import ipaddress
import random
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class PrefixRecord:
    network: int  # masked network address as integer
    masklen: int
    city: str
    country: str
    source_tag: str = ""

    def __post_init__(self):
        if not 0 <= self.masklen <= 32:
            raise ValueError(f"mask length {self.masklen} out of range")
        mask = _mask(self.masklen)
        if self.network & ~mask & 0xFFFFFFFF:
            raise ValueError("prefix has bits set beyond its mask")

    @property
    def cidr(self) -> str:
        return f"{ipaddress.IPv4Address(self.network)}/{self.masklen}"

    @property
    def region(self) -> tuple[str, str]:
        return (self.city, self.country)

    def contains(self, address: str) -> bool:
        return (int(ipaddress.IPv4Address(address)) & _mask(self.masklen)) == self.network


def _mask(masklen: int) -> int:
    return (0xFFFFFFFF << (32 - masklen)) & 0xFFFFFFFF if masklen else 0


@dataclass
class PrefixDb:
    """Longest-prefix-match database over PrefixRecords."""

    records: list[PrefixRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    _by_masklen: dict[int, dict[int, PrefixRecord]] = field(default_factory=dict, repr=False)

    def add(self, record: PrefixRecord) -> None:
        table = self._by_masklen.setdefault(record.masklen, {})
        if record.network in table:
            self.warnings.append(f"duplicate prefix {record.cidr}: last row wins")
            self.records = [
                r for r in self.records
                if (r.network, r.masklen) != (record.network, record.masklen)
            ]
        table[record.network] = record
        self.records.append(record)

    def lookup(self, address: str) -> PrefixRecord | None:
        """Longest-prefix match; None when no prefix covers the address."""
        value = int(ipaddress.IPv4Address(address))
        for masklen in sorted(self._by_masklen, reverse=True):
            record = self._by_masklen[masklen].get(value & _mask(masklen))
            if record is not None:
                return record
        return None

    def region_prefixes(self, region: tuple[str, str]) -> list[PrefixRecord]:
        return [r for r in self.records if r.region == region]


def load_prefix_db(path: str | Path) -> PrefixDb:
    """Load a prefix CSV with required header prefix,mask,city,country.

    An optional source_tag column is carried through.  Malformed rows raise
    with their line number; duplicate identical prefixes keep the last row
    and add a warning.
    """
    db = PrefixDb()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"prefix", "mask", "city", "country"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(required)}")
        for row in reader:
            lineno = reader.line_num
            try:
                record = PrefixRecord(
                    network=int(ipaddress.IPv4Address(row["prefix"])),
                    masklen=int(row["mask"]),
                    city=row["city"].strip(),
                    country=row["country"].strip(),
                    source_tag=(row.get("source_tag") or "").strip(),
                )
            except (ValueError, ipaddress.AddressValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            db.add(record)
    return db


@dataclass
class Cluster:
    region: tuple[str, str]
    ranges: list[PrefixRecord]
    representatives: dict[str, str]  # cidr -> probe-target host address
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        for record in self.ranges:
            if record.region != self.region:
                raise ValueError(f"range {record.cidr} not in region {self.region}")

    @property
    def size(self) -> int:
        return len(self.ranges)

    @property
    def probeable(self) -> list[PrefixRecord]:
        return [r for r in self.ranges if r.cidr in self.representatives]

    @property
    def hosts(self) -> list[str]:
        return [self.representatives[r.cidr] for r in self.probeable]


def load_representatives(path: str | Path) -> dict[str, str]:
    """Read a representatives CSV prefix,mask,host into a cidr -> host map."""
    reps: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"prefix", "mask", "host"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(required)}")
        for row in reader:
            cidr = f"{row['prefix'].strip()}/{int(row['mask'])}"
            reps[cidr] = row["host"].strip()
    return reps


def build_cluster(
    db: PrefixDb,
    region: tuple[str, str],
    representatives: dict[str, str],
) -> Cluster:
    """Collect the db prefixes of one region and attach probe representatives.

    Ranges without a representative stay in the cluster but are unprobeable.
    A representative outside its prefix is an error naming the prefix.
    """
    ranges = db.region_prefixes(region)
    cluster_reps: dict[str, str] = {}
    warnings = []
    for record in ranges:
        host = representatives.get(record.cidr)
        if host is None:
            continue
        if not record.contains(host):
            raise ValueError(f"representative {host} outside prefix {record.cidr}")
        cluster_reps[record.cidr] = host
    if not ranges:
        warnings.append(f"region {region} has no prefixes")
    return Cluster(region=region, ranges=ranges, representatives=cluster_reps, warnings=warnings)


def sample_ranges(cluster: Cluster, n: int, seed: int) -> Cluster:
    """Uniform without-replacement sample of min(n, size) ranges, seed-determined.

    Original range order is preserved in the sample.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    if n >= cluster.size:
        return cluster
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(cluster.size), n))
    ranges = [cluster.ranges[i] for i in chosen]
    reps = {
        r.cidr: cluster.representatives[r.cidr]
        for r in ranges
        if r.cidr in cluster.representatives
    }
    return Cluster(region=cluster.region, ranges=ranges, representatives=reps)


def random_baseline_pairs(
    clusters: list[Cluster], m: int, seed: int
) -> list[tuple[str, str]]:
    """Draw m endpoint pairs uniformly over all representatives, cross-region
    allowed, never pairing a host with itself.  Deterministic under seed."""
    hosts = [host for cluster in clusters for host in cluster.hosts]
    if len(set(hosts)) < 2:
        raise ValueError("need at least two distinct representatives")
    rng = random.Random(seed)
    pairs = []
    while len(pairs) < m:
        a = rng.choice(hosts)
        b = rng.choice(hosts)
        if a != b:
            pairs.append((a, b))
    return pairs
