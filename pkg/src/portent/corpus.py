"""Ground-truth data model: service records, the corpus, and seed/test splits.

A Corpus is an immutable, indexed set of responsive (ip, port) services.
It plays two roles: the dataset a model trains on, and the simulated
address space a scan backend answers from.
"""

from __future__ import annotations

import gzip
import io
import json
import sys
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .features import FeatureKind, VOLATILE_KINDS, valid_kinds_for_protocol
from .ipnet import Subnet, ip_from_text, ip_to_text

DEFAULT_MAX_SERVICES_PER_HOST = 10


class CorpusError(Exception):
    """Malformed corpus input or records that violate the data model."""


@dataclass(frozen=True, slots=True)
class ServiceRecord:
    """One responsive (ip, port) with its parsed application features."""

    ip: int
    port: int
    protocol: str
    app_features: Mapping[FeatureKind, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 <= self.port <= 65535:
            raise CorpusError(f"port out of range: {self.port}")
        if not self.protocol:
            raise CorpusError("protocol must be non-empty")
        valid = valid_kinds_for_protocol(self.protocol)
        for kind, value in self.app_features.items():
            if kind not in valid:
                raise CorpusError(
                    f"feature {kind.value} not valid for protocol {self.protocol!r}"
                )
            if not value:
                raise CorpusError(f"empty value for feature {kind.value}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.ip, self.port)

    def content_signature(self, dynamic_kinds: frozenset[FeatureKind]) -> tuple:
        """Response content with volatile fields stripped, for duplicate detection."""
        items = tuple(sorted(
            (kind.value, value) for kind, value in self.app_features.items()
            if kind not in dynamic_kinds
        ))
        return (self.protocol, items)


def make_record(ip: int, port: int, protocol: str,
                app_features: Optional[Mapping[FeatureKind, str]] = None) -> ServiceRecord:
    """Build a record with interned strings (dict keys in hot loops)."""
    feats = {}
    if app_features:
        feats = {kind: sys.intern(value) for kind, value in app_features.items()}
    return ServiceRecord(ip, port, sys.intern(protocol), feats)


class Corpus:
    """Queryable universe of services, indexed by host and by (port, subnet).

    Immutable after construction; safe for concurrent reads.
    """

    def __init__(self, records: Iterable[ServiceRecord], universe: Subnet,
                 index_prefix: int = 16):
        if not 0 <= index_prefix <= 32:
            raise CorpusError(f"index prefix out of range: {index_prefix}")
        self.universe = universe
        self.index_prefix = index_prefix

        dedup: dict[tuple[int, int], ServiceRecord] = {}
        outside = []
        for rec in records:
            if not universe.contains(rec.ip):
                outside.append(rec)
                continue
            dedup[rec.key] = rec  # duplicate (ip, port) keeps the last occurrence
        if outside:
            sample = ", ".join(ip_to_text(r.ip) for r in outside[:10])
            raise CorpusError(
                f"{len(outside)} record(s) outside universe {universe}: {sample}"
            )

        self._records = [dedup[k] for k in sorted(dedup)]
        self._by_key = dedup
        by_ip: dict[int, list[ServiceRecord]] = {}
        by_port: dict[int, list[ServiceRecord]] = {}
        by_port_subnet: dict[tuple[int, int], list[ServiceRecord]] = {}
        for rec in self._records:
            by_ip.setdefault(rec.ip, []).append(rec)
            by_port.setdefault(rec.port, []).append(rec)
            bucket = rec.ip & _mask_cache(index_prefix)
            by_port_subnet.setdefault((rec.port, bucket), []).append(rec)
        self._by_ip = by_ip
        self._by_port = by_port
        self._by_port_subnet = by_port_subnet

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ServiceRecord]:
        return iter(self._records)

    @property
    def services(self) -> Sequence[ServiceRecord]:
        """All records, sorted by (ip, port)."""
        return self._records

    def lookup(self, ip: int, port: int) -> Optional[ServiceRecord]:
        return self._by_key.get((ip, port))

    def services_on_ip(self, ip: int) -> Sequence[ServiceRecord]:
        return self._by_ip.get(ip, ())

    def responsive_ips(self) -> list[int]:
        return sorted(self._by_ip)

    def ports(self) -> list[int]:
        return sorted(self._by_port)

    def services_on_port(self, port: int) -> Sequence[ServiceRecord]:
        return self._by_port.get(port, ())

    def services_on(self, port: int, subnet: Subnet) -> list[ServiceRecord]:
        """Records on `port` inside `subnet` (uses the subnet index when it can)."""
        if subnet.prefix_len >= self.index_prefix:
            bucket = subnet.base & _mask_cache(self.index_prefix)
            candidates = self._by_port_subnet.get((port, bucket), ())
        else:
            candidates = self._by_port.get(port, ())
        if subnet.prefix_len == self.index_prefix:
            return list(candidates)
        return [r for r in candidates if subnet.contains(r.ip)]

    def ip_count_by_port(self) -> dict[int, int]:
        return {port: len({r.ip for r in recs}) for port, recs in self._by_port.items()}


def _mask_cache(prefix_len: int) -> int:
    return 0 if prefix_len == 0 else (0xFFFFFFFF << (32 - prefix_len)) & 0xFFFFFFFF


# ---------------------------------------------------------------------------
# Corpus file format: newline-delimited JSON objects, one service per line:
#   {"ip": "1.2.3.4", "port": 80, "protocol": "http", "features": {"http_server": "nginx"}}
# ---------------------------------------------------------------------------

class _CanonicalGzipWriter(io.TextIOWrapper):
    """Gzip text writer with a fixed header (no mtime, no filename), so
    equal content always produces equal bytes."""

    def __init__(self, path):
        self._raw = open(path, "wb")
        self._gz = gzip.GzipFile(filename="", fileobj=self._raw, mode="wb", mtime=0)
        super().__init__(self._gz, encoding="utf-8")

    def close(self):
        try:
            super().close()
        finally:
            self._raw.close()


def _open_text(path, mode: str):
    path = str(path)
    if path.endswith(".gz"):
        if "w" in mode:
            return _CanonicalGzipWriter(path)
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def parse_record_line(line: str, lineno: int) -> ServiceRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {lineno}: invalid JSON: {exc}") from exc
    try:
        ip = ip_from_text(obj["ip"])
        port = int(obj["port"])
        protocol = obj["protocol"]
        feats = {
            FeatureKind.from_name(name): value
            for name, value in (obj.get("features") or {}).items()
        }
        return make_record(ip, port, protocol, feats)
    except (KeyError, TypeError, ValueError, CorpusError) as exc:
        raise CorpusError(f"line {lineno}: {exc}") from exc


def ingest(path, universe: Subnet, index_prefix: int = 16) -> Corpus:
    """Load a corpus file. Duplicate (ip, port) lines collapse to the last one."""
    records = []
    with _open_text(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_record_line(line, lineno))
    return Corpus(records, universe, index_prefix)


def record_to_obj(rec: ServiceRecord) -> dict:
    obj = {"ip": ip_to_text(rec.ip), "port": rec.port, "protocol": rec.protocol}
    if rec.app_features:
        obj["features"] = {
            kind.value: rec.app_features[kind]
            for kind in sorted(rec.app_features, key=lambda k: k.value)
        }
    return obj


def write_records(records: Iterable[ServiceRecord], path) -> None:
    """Write records in corpus file format, sorted by (ip, port)."""
    ordered = sorted(records, key=lambda r: r.key)
    with _open_text(path, "w") as fh:
        for rec in ordered:
            fh.write(json.dumps(record_to_obj(rec), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Pseudo-service filtering
# ---------------------------------------------------------------------------

def filter_pseudo_services(
    corpus: Corpus,
    dynamic_kinds: frozenset[FeatureKind] = VOLATILE_KINDS,
    max_services_per_host: int = DEFAULT_MAX_SERVICES_PER_HOST,
    keep_representative: bool = True,
) -> Corpus:
    """Remove wildcard responders before training.

    Hosts serving more than `max_services_per_host` services are dropped
    entirely. On surviving hosts, services whose content is identical
    once dynamic fields are stripped collapse to the lowest-port
    representative (or are all removed when keep_representative=False).
    Returns a new Corpus; the input is unchanged.
    """
    if max_services_per_host < 1:
        raise ValueError("max_services_per_host must be >= 1")
    kept: list[ServiceRecord] = []
    for ip in sorted(corpus._by_ip):
        recs = corpus._by_ip[ip]
        if len(recs) > max_services_per_host:
            continue
        groups: dict[tuple, list[ServiceRecord]] = {}
        for rec in sorted(recs, key=lambda r: r.port):
            groups.setdefault(rec.content_signature(dynamic_kinds), []).append(rec)
        for members in groups.values():
            if len(members) == 1:
                kept.append(members[0])
            elif keep_representative:
                kept.append(members[0])
    return Corpus(kept, corpus.universe, corpus.index_prefix)


# ---------------------------------------------------------------------------
# IP-wise seed/test split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedSplit:
    """Disjoint partition of a corpus's responsive IPs.

    Membership is decided per IP: all services of one host land on the
    same side.
    """

    seed_ips: frozenset[int]
    test_ips: frozenset[int]
    seed_fraction: float
    rng_seed: int

    def side(self, ip: int) -> str:
        if ip in self.seed_ips:
            return "seed"
        if ip in self.test_ips:
            return "test"
        return "none"


def split(corpus: Corpus, seed_fraction: float, rng_seed: int) -> SeedSplit:
    """Assign each responsive IP to the seed side with probability seed_fraction."""
    if not 0.0 < seed_fraction < 1.0:
        raise ValueError(f"seed_fraction must be in (0, 1), got {seed_fraction}")
    ips = corpus.responsive_ips()
    rng = np.random.default_rng(rng_seed)
    draws = rng.random(len(ips))
    seed_ips = frozenset(ip for ip, d in zip(ips, draws) if d < seed_fraction)
    test_ips = frozenset(ips) - seed_ips
    return SeedSplit(seed_ips, test_ips, seed_fraction, rng_seed)


def split_from_sample(corpus: Corpus, sampled_ips: Iterable[int],
                      seed_fraction: float, rng_seed: int) -> SeedSplit:
    """Split induced by a universe sample: sampled responsive IPs are the seed side."""
    sampled = set(sampled_ips)
    responsive = corpus.responsive_ips()
    seed_ips = frozenset(ip for ip in responsive if ip in sampled)
    test_ips = frozenset(responsive) - seed_ips
    return SeedSplit(seed_ips, test_ips, seed_fraction, rng_seed)


def eligible_ports(split_: SeedSplit, corpus: Corpus, min_ips: int = 2) -> frozenset[int]:
    """Ports with strictly more than min_ips responsive IPs across the split.

    The same set restricts both training and evaluation.
    """
    if min_ips < 1:
        raise ValueError("min_ips must be >= 1")
    members = split_.seed_ips | split_.test_ips
    out = set()
    for port, recs in corpus._by_port.items():
        ips = {r.ip for r in recs if r.ip in members}
        if len(ips) > min_ips:
            out.add(port)
    return frozenset(out)
