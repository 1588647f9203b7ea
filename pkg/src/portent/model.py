"""Conditional-probability co-occurrence model.

For every host in a seed set and every ordered pair (b, a) of its open
ports, the build counts co-occurrence under four condition classes
derived from the service on port b:

    port-only            P(a | b)
    port+application     P(a | b, app value on b)
    port+network         P(a | b, host network)
    port+app+network     P(a | b, app value on b, host network)

Counting is host-level: a condition's denominator is the number of hosts
exhibiting it, its numerator the number of those hosts that also open
the target port. The build is data-parallel over host partitions and the
merge is plain count addition, so results are independent of the
partition count.
"""

from __future__ import annotations

import json
import multiprocessing
from typing import Iterable, NamedTuple, Optional, Sequence

from .corpus import ServiceRecord
from .features import (
    KIND_INDEX,
    AsnTable,
    DEFAULT_NET_KINDS,
    FeatureKind,
    FeatureValue,
    extract_app_features,
    extract_net_features,
)

CLASS_NAMES = ("port_only", "port_net", "port_app", "port_app_net")


class Condition(NamedTuple):
    """Evidence shape: a discovered port plus optional app/net values."""

    port_b: int
    app: Optional[FeatureValue] = None
    net: Optional[FeatureValue] = None

    @property
    def class_rank(self) -> int:
        # Specificity order used in tie-breaks: port+app+net wins over
        # port+app over port+net over port-only.
        return ((2 if self.app is not None else 0)
                + (1 if self.net is not None else 0))

    @property
    def class_name(self) -> str:
        return CLASS_NAMES[self.class_rank]


def _fv_key(fv: Optional[FeatureValue]) -> tuple[int, str]:
    if fv is None:
        return (-1, "")
    return (KIND_INDEX[fv.kind], fv.value)


def condition_sort_key(cond: Condition) -> tuple:
    """Canonical total order over conditions (serialization, tie-breaks)."""
    return (cond.port_b, cond.class_rank, _fv_key(cond.app), _fv_key(cond.net))


def derive_conditions(record: ServiceRecord,
                      net_values: Sequence[FeatureValue]) -> list[Condition]:
    """All conditions this service can evidence, in deterministic order."""
    b = record.port
    apps = extract_app_features(record)
    conds = [Condition(b)]
    conds.extend(Condition(b, app=a) for a in apps)
    conds.extend(Condition(b, net=n) for n in net_values)
    conds.extend(Condition(b, app=a, net=n) for a in apps for n in net_values)
    return conds


def group_by_host(services: Iterable[ServiceRecord]) -> dict[int, list[ServiceRecord]]:
    hosts: dict[int, list[ServiceRecord]] = {}
    for rec in services:
        hosts.setdefault(rec.ip, []).append(rec)
    return hosts


class CoOccurrenceModel:
    """Joint/conditional host counts for every observed condition."""

    def __init__(self, joint: dict[Condition, dict[int, int]],
                 cond_hosts: dict[Condition, int],
                 min_support: int,
                 net_kinds: frozenset[FeatureKind],
                 built_from: str = ""):
        self._joint = joint
        self._cond_hosts = cond_hosts
        self.min_support = min_support
        self.net_kinds = frozenset(net_kinds)
        self.built_from = built_from

    def __len__(self) -> int:
        return sum(len(t) for t in self._joint.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoOccurrenceModel):
            return NotImplemented
        return (self._joint == other._joint
                and self._cond_hosts == other._cond_hosts
                and self.min_support == other.min_support
                and self.net_kinds == other.net_kinds)

    def conditions(self) -> list[Condition]:
        return sorted(self._joint, key=condition_sort_key)

    def cond_host_count(self, cond: Condition) -> int:
        return self._cond_hosts.get(cond, 0)

    def targets(self, cond: Condition) -> dict[int, int]:
        return dict(self._joint.get(cond, ()))

    def entry(self, cond: Condition, target_port: int) -> Optional[tuple[int, int]]:
        """(joint_hosts, cond_hosts) for a table entry, or None."""
        targets = self._joint.get(cond)
        if not targets:
            return None
        joint = targets.get(target_port)
        if joint is None:
            return None
        return joint, self._cond_hosts[cond]

    def probability(self, cond: Condition, target_port: int) -> Optional[float]:
        """joint/cond for an existing entry; never 0, at most 1."""
        targets = self._joint.get(cond)
        if not targets:
            return None
        joint = targets.get(target_port)
        if joint is None:
            return None
        return joint / self._cond_hosts[cond]

    # -- serialization ------------------------------------------------------

    FORMAT_VERSION = 1

    def dump(self, path) -> None:
        rows = []
        for cond in self.conditions():
            ch = self._cond_hosts[cond]
            targets = self._joint[cond]
            app = [cond.app.kind.value, cond.app.value] if cond.app else None
            net = [cond.net.kind.value, cond.net.value] if cond.net else None
            for port in sorted(targets):
                rows.append([cond.port_b, app, net, port, targets[port], ch])
        doc = {
            "version": self.FORMAT_VERSION,
            "min_support": self.min_support,
            "net_kinds": sorted(k.value for k in self.net_kinds),
            "built_from": self.built_from,
            "entries": rows,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, separators=(",", ":"), sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CoOccurrenceModel":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("version") != cls.FORMAT_VERSION:
            raise ValueError(f"unsupported model format version: {doc.get('version')}")
        joint: dict[Condition, dict[int, int]] = {}
        cond_hosts: dict[Condition, int] = {}
        for port_b, app, net, target, jt, ch in doc["entries"]:
            cond = Condition(
                port_b,
                app=FeatureValue(FeatureKind.from_name(app[0]), app[1]) if app else None,
                net=FeatureValue(FeatureKind.from_name(net[0]), net[1]) if net else None,
            )
            joint.setdefault(cond, {})[target] = jt
            cond_hosts[cond] = ch
        return cls(joint, cond_hosts,
                   min_support=doc["min_support"],
                   net_kinds=frozenset(FeatureKind.from_name(n) for n in doc["net_kinds"]),
                   built_from=doc.get("built_from", ""))


# ---------------------------------------------------------------------------
# Build
# ---------------------------------------------------------------------------

# Worker state published before fork; children read it copy-on-write.
_FORK_STATE: Optional[tuple] = None

_KINDS = tuple(FeatureKind)


def _packed_conditions(record: ServiceRecord,
                       net_packed: list[tuple[int, str]]) -> list[tuple]:
    # Conditions packed as (port_b, app_kind_idx, app_value, net_kind_idx,
    # net_value) with (-1, "") for an absent side: plain tuples hash and
    # pickle much faster than NamedTuples holding enum members.
    b = record.port
    apps = [(KIND_INDEX[fv.kind], fv.value) for fv in extract_app_features(record)]
    conds = [(b, -1, "", -1, "")]
    conds.extend((b, ak, av, -1, "") for ak, av in apps)
    conds.extend((b, -1, "", nk, nv) for nk, nv in net_packed)
    conds.extend((b, ak, av, nk, nv) for ak, av in apps for nk, nv in net_packed)
    return conds


def _unpack_condition(packed: tuple) -> Condition:
    b, ak, av, nk, nv = packed
    return Condition(b,
                     app=FeatureValue(_KINDS[ak], av) if ak >= 0 else None,
                     net=FeatureValue(_KINDS[nk], nv) if nk >= 0 else None)


def _count_hosts(host_items: Sequence[tuple[int, list[ServiceRecord]]],
                 net_kinds: frozenset[FeatureKind],
                 asn_table: Optional[AsnTable]):
    joint: dict[tuple, dict[int, int]] = {}
    cond_hosts: dict[tuple, int] = {}
    ch_get = cond_hosts.get
    for ip, recs in host_items:
        net_packed = [(KIND_INDEX[fv.kind], fv.value)
                      for fv in extract_net_features(ip, net_kinds, asn_table)]
        per_service = [_packed_conditions(rec, net_packed) for rec in recs]
        for conds in per_service:
            for cond in conds:
                cond_hosts[cond] = ch_get(cond, 0) + 1
        if len(recs) < 2:
            continue
        ports = [rec.port for rec in recs]
        for rec, conds in zip(recs, per_service):
            b = rec.port
            for a in ports:
                if a == b:
                    continue
                for cond in conds:
                    targets = joint.get(cond)
                    if targets is None:
                        targets = joint[cond] = {}
                    targets[a] = targets.get(a, 0) + 1
    return joint, cond_hosts


def _count_partition(index: int):
    host_items, partitions, net_kinds, asn_table = _FORK_STATE
    return _count_hosts(host_items[index::partitions], net_kinds, asn_table)


def build(seed_services: Iterable[ServiceRecord],
          net_kinds: frozenset[FeatureKind] = DEFAULT_NET_KINDS,
          min_support: int = 2,
          partitions: int = 1,
          asn_table: Optional[AsnTable] = None,
          built_from: str = "") -> CoOccurrenceModel:
    """Count co-occurrence over hosts and drop low-support conditions.

    Seed services are expected to be pseudo-filtered. ASN conditions
    require an asn_table; without one the ASN kind yields no values.
    """
    if partitions < 1:
        raise ValueError("partitions must be >= 1")
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    hosts = group_by_host(seed_services)
    host_items = [(ip, hosts[ip]) for ip in sorted(hosts)]

    if partitions == 1 or len(host_items) < 2 * partitions:
        parts = [_count_hosts(host_items, net_kinds, asn_table)]
    else:
        global _FORK_STATE
        _FORK_STATE = (host_items, partitions, net_kinds, asn_table)
        try:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(processes=partitions) as pool:
                parts = pool.map(_count_partition, range(partitions))
        finally:
            _FORK_STATE = None

    packed_joint, packed_ch = parts[0]
    for part_joint, part_ch in parts[1:]:
        for cond, n in part_ch.items():
            packed_ch[cond] = packed_ch.get(cond, 0) + n
        for cond, targets in part_joint.items():
            merged = packed_joint.get(cond)
            if merged is None:
                packed_joint[cond] = targets
                continue
            for port, n in targets.items():
                merged[port] = merged.get(port, 0) + n

    if min_support > 1:
        dropped = [c for c, n in packed_ch.items() if n < min_support]
        for cond in dropped:
            del packed_ch[cond]
            packed_joint.pop(cond, None)
    # A condition only earns a table entry by predicting some target port;
    # evidence that never co-occurs with another port is dead weight.
    joint = {}
    cond_hosts = {}
    for packed, targets in packed_joint.items():
        cond = _unpack_condition(packed)
        joint[cond] = targets
        cond_hosts[cond] = packed_ch[packed]
    return CoOccurrenceModel(joint, cond_hosts, min_support, net_kinds, built_from)


# ---------------------------------------------------------------------------
# Argmax over derivable conditions
# ---------------------------------------------------------------------------

def _better(cand: tuple, best: tuple) -> bool:
    # Compare (prob, cond_hosts) descending, then port_b ascending, then
    # class specificity descending, then canonical feature order ascending.
    if cand[0] != best[0]:
        return cand[0] > best[0]
    if cand[1] != best[1]:
        return cand[1] > best[1]
    if cand[2] != best[2]:
        return cand[2] < best[2]
    if cand[3] != best[3]:
        return cand[3] > best[3]
    return cand[4] < best[4]


def best_condition_among(model: CoOccurrenceModel,
                         conditions: Iterable[Condition],
                         target_port: int) -> Optional[tuple[Condition, float]]:
    """Maximum-probability condition for a target among the given candidates."""
    best = None
    best_cond = None
    for cond in conditions:
        p = model.probability(cond, target_port)
        if p is None:
            continue
        cand = (p, model.cond_host_count(cond), cond.port_b, cond.class_rank,
                (_fv_key(cond.app), _fv_key(cond.net)))
        if best is None or _better(cand, best):
            best = cand
            best_cond = cond
    if best_cond is None:
        return None
    return best_cond, best[0]


def best_condition_for(model: CoOccurrenceModel,
                       host_services: Sequence[ServiceRecord],
                       target_port: int,
                       net_kinds: Optional[frozenset[FeatureKind]] = None,
                       asn_table: Optional[AsnTable] = None) -> Optional[tuple[Condition, float]]:
    """Best condition predicting target_port from a host's other services.

    Evaluates every condition derivable from every service not on the
    target port itself; returns None when the model has no entry for any
    of them.
    """
    kinds = model.net_kinds if net_kinds is None else net_kinds
    candidates: list[Condition] = []
    net_values: Optional[list[FeatureValue]] = None
    for rec in host_services:
        if rec.port == target_port:
            continue
        if net_values is None:
            net_values = extract_net_features(rec.ip, kinds, asn_table)
        candidates.extend(derive_conditions(rec, net_values))
    return best_condition_among(model, candidates, target_port)
