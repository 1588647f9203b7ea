"""Synthetic ground-truth generation.

Builds populations of template devices (fixed port sets with shared
banner values, optionally clustered into subnets), wildcard pseudo-service
hosts, and unpredictable noise hosts. Deterministic for a fixed rng_seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import Corpus, CorpusError, ServiceRecord, make_record
from .features import FeatureKind, valid_kinds_for_protocol
from .ipnet import Subnet

DEFAULT_PORT_PROTOCOLS = {
    21: "ftp", 22: "ssh", 23: "telnet", 25: "smtp", 80: "http", 110: "pop3",
    143: "imap", 443: "https", 623: "ipmi", 1433: "mssql", 1723: "pptp",
    2222: "ssh", 2323: "telnet", 3306: "mysql", 5900: "vnc", 7547: "cwmp",
    8080: "http", 8443: "https", 8888: "http", 11211: "memcached",
}


def protocol_for_port(port: int) -> str:
    return DEFAULT_PORT_PROTOCOLS.get(port, "http")


class CapacityError(CorpusError):
    """Requested host population does not fit in the universe."""


@dataclass(frozen=True)
class DeviceTemplate:
    """A manufactured device population with a predictable port footprint."""

    id: str
    port_set: frozenset[int]
    population: int
    optional_ports: dict[int, float] = field(default_factory=dict)
    shared_features: dict[FeatureKind, str] = field(default_factory=dict)
    subnet_clustering: tuple[tuple[Subnet, float], ...] = ()
    protocols: dict[int, str] = field(default_factory=dict)
    port_features: dict[int, dict[FeatureKind, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.port_set:
            raise ValueError(f"template {self.id}: port_set is empty")
        if self.population < 0:
            raise ValueError(f"template {self.id}: negative population")
        for port, prob in self.optional_ports.items():
            if not 0.0 < prob <= 1.0:
                raise ValueError(f"template {self.id}: open-probability for "
                                 f"port {port} must be in (0, 1]")
            if port in self.port_set:
                raise ValueError(f"template {self.id}: port {port} is both "
                                 f"fixed and optional")

    def protocol(self, port: int) -> str:
        return self.protocols.get(port) or protocol_for_port(port)

    def features_for(self, port: int, fixed: bool) -> dict[FeatureKind, str]:
        proto = self.protocol(port)
        valid = valid_kinds_for_protocol(proto)
        feats: dict[FeatureKind, str] = {}
        if fixed:
            feats.update({k: v for k, v in self.shared_features.items() if k in valid})
        feats.update({k: v for k, v in self.port_features.get(port, {}).items()
                      if k in valid})
        return feats


@dataclass(frozen=True)
class SyntheticSpec:
    universe: Subnet
    templates: tuple[DeviceTemplate, ...]
    pseudo_host_count: int = 0
    noise_host_count: int = 0
    rng_seed: int = 0
    pseudo_port_span: int = 1200
    noise_ports_min: int = 1
    noise_ports_max: int = 3
    index_prefix: int = 16

    def total_hosts(self) -> int:
        return (sum(t.population for t in self.templates)
                + self.pseudo_host_count + self.noise_host_count)


class _AddressPool:
    """Collision-free address allocation inside subnets of the universe."""

    def __init__(self, universe: Subnet, rng: np.random.Generator):
        self.universe = universe
        self.rng = rng
        self.used: set[int] = set()

    def take_batch(self, subnet: Optional[Subnet], count: int) -> list[int]:
        region = subnet or self.universe
        if self.universe.overlap_size(region) == 0:
            raise CapacityError(f"subnet {region} does not intersect universe "
                                f"{self.universe}")
        if self.universe.contains_subnet(region):
            low, high = region.base, region.base + region.size
        else:
            low, high = self.universe.base, self.universe.base + self.universe.size
        if count > (high - low) - sum(1 for u in self.used if low <= u < high):
            raise CapacityError(f"cannot place {count} hosts in {region}")
        out: list[int] = []
        while len(out) < count:
            need = count - len(out)
            draws = self.rng.integers(low, high, size=max(need * 2, 16))
            for ip in draws:
                ip = int(ip)
                if ip not in self.used:
                    self.used.add(ip)
                    out.append(ip)
                    if len(out) == count:
                        break
        return out


def generate_with_assignments(spec: SyntheticSpec) -> tuple[Corpus, dict[str, list[int]]]:
    """Generate a corpus plus the hosts each template (and pseudo/noise) produced."""
    if spec.total_hosts() > spec.universe.size:
        raise CapacityError(
            f"{spec.total_hosts()} hosts exceed universe capacity {spec.universe.size}"
        )
    if spec.pseudo_host_count and not 0 < spec.pseudo_port_span <= 65536:
        raise ValueError("pseudo_port_span out of range")

    rng = np.random.default_rng(spec.rng_seed)
    pool = _AddressPool(spec.universe, rng)
    records: list[ServiceRecord] = []
    assignments: dict[str, list[int]] = {}

    for tpl in spec.templates:
        if tpl.subnet_clustering:
            subnets = [s for s, _ in tpl.subnet_clustering]
            weights = np.array([w for _, w in tpl.subnet_clustering], dtype=float)
            weights /= weights.sum()
            choice = rng.choice(len(subnets), size=tpl.population, p=weights)
            ips: list[int] = []
            for idx in range(len(subnets)):
                n = int(np.count_nonzero(choice == idx))
                if n:
                    ips.extend(pool.take_batch(subnets[idx], n))
        else:
            ips = pool.take_batch(None, tpl.population)
        assignments[tpl.id] = sorted(ips)
        fixed_ports = sorted(tpl.port_set)
        opt_ports = sorted(tpl.optional_ports)
        for ip in ips:
            for port in fixed_ports:
                records.append(make_record(ip, port, tpl.protocol(port),
                                           tpl.features_for(port, fixed=True)))
            if opt_ports:
                draws = rng.random(len(opt_ports))
                for port, d in zip(opt_ports, draws):
                    if d < tpl.optional_ports[port]:
                        records.append(make_record(ip, port, tpl.protocol(port),
                                                   tpl.features_for(port, fixed=False)))

    if spec.pseudo_host_count:
        ips = pool.take_batch(None, spec.pseudo_host_count)
        assignments["pseudo"] = sorted(ips)
        for i, ip in enumerate(ips):
            start = int(rng.integers(1, 65536 - spec.pseudo_port_span))
            body = f"pseudo-body-{i}"
            for off in range(spec.pseudo_port_span):
                port = start + off
                records.append(make_record(ip, port, "http", {
                    FeatureKind.HTTP_BODY_HASH: body,
                    FeatureKind.HTTP_SERVER: "sink",
                    # Dynamic field differs per port; stripped before comparison.
                    FeatureKind.HTTP_DATE: f"t{port}",
                }))
    if spec.noise_host_count:
        ips = pool.take_batch(None, spec.noise_host_count)
        assignments["noise"] = sorted(ips)
        for ip in ips:
            n_ports = int(rng.integers(spec.noise_ports_min, spec.noise_ports_max + 1))
            ports = sorted({int(p) for p in rng.integers(0, 65536, size=n_ports)})
            tag = f"noise-{rng.integers(0, 1 << 48):012x}"
            for port in ports:
                proto = protocol_for_port(port)
                feats = ({FeatureKind.HTTP_BODY_HASH: tag} if proto == "http" else {})
                records.append(make_record(ip, port, proto, feats))

    return Corpus(records, spec.universe, spec.index_prefix), assignments


def generate(spec: SyntheticSpec) -> Corpus:
    return generate_with_assignments(spec)[0]


# ---------------------------------------------------------------------------
# JSON spec file format (mirrors SyntheticSpec; see README for a schema example)
# ---------------------------------------------------------------------------

def template_from_obj(obj: dict) -> DeviceTemplate:
    features = {FeatureKind.from_name(k): v
                for k, v in (obj.get("shared_features") or {}).items()}
    port_features = {
        int(port): {FeatureKind.from_name(k): v for k, v in feats.items()}
        for port, feats in (obj.get("port_features") or {}).items()
    }
    clustering = tuple(
        (Subnet.parse(prefix), float(weight))
        for prefix, weight in (obj.get("subnet_clustering") or [])
    )
    return DeviceTemplate(
        id=obj["id"],
        port_set=frozenset(int(p) for p in obj["port_set"]),
        population=int(obj["population"]),
        optional_ports={int(p): float(v) for p, v in (obj.get("optional_ports") or {}).items()},
        shared_features=features,
        subnet_clustering=clustering,
        protocols={int(p): v for p, v in (obj.get("protocols") or {}).items()},
        port_features=port_features,
    )


def spec_from_obj(obj: dict) -> SyntheticSpec:
    return SyntheticSpec(
        universe=Subnet.parse(obj["universe"]),
        templates=tuple(template_from_obj(t) for t in obj.get("templates", [])),
        pseudo_host_count=int(obj.get("pseudo_host_count", 0)),
        noise_host_count=int(obj.get("noise_host_count", 0)),
        rng_seed=int(obj.get("rng_seed", 0)),
        pseudo_port_span=int(obj.get("pseudo_port_span", 1200)),
        noise_ports_min=int(obj.get("noise_ports_min", 1)),
        noise_ports_max=int(obj.get("noise_ports_max", 3)),
        index_prefix=int(obj.get("index_prefix", 16)),
    )


def load_spec(path) -> SyntheticSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_obj(json.load(fh))
