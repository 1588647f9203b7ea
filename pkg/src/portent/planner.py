"""Scan planning: the priors scan list and the prediction list.

Phase three of the pipeline sweeps (port, subnet) tuples to find each
host's first, most predictive service. Phase four turns the features of
those discovered services into per-(ip, port) predictions ordered by
probability.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .corpus import ServiceRecord
from .features import AsnTable, FeatureKind, extract_net_features
from .ipnet import Subnet, ip_from_text, ip_to_text
from .model import (
    Condition,
    CoOccurrenceModel,
    best_condition_among,
    condition_sort_key,
    derive_conditions,
    group_by_host,
)

DEFAULT_PROBABILITY_FLOOR = 1e-5  # roughly the hit rate of random probing


@dataclass(frozen=True, slots=True)
class PriorsEntry:
    port: int
    subnet: Subnet
    coverage: int


@dataclass(frozen=True, slots=True)
class PredictiveFeatureEntry:
    condition: Condition
    target_port: int
    probability: float


@dataclass(frozen=True, slots=True)
class Prediction:
    ip: int
    port: int
    probability: float
    via: Condition


def build_priors_list(seed_services: Iterable[ServiceRecord],
                      model: CoOccurrenceModel,
                      step_prefix: int,
                      asn_table: Optional[AsnTable] = None) -> list[PriorsEntry]:
    """Ordered (port, subnet) sweeps that surface each host's most
    predictive service.

    Single-service hosts contribute their own (port, subnet). On
    multi-service hosts, each service's best evidence port contributes
    instead; a service no surviving condition predicts falls back to its
    own (port, subnet), since it can only be discovered directly.
    Entries are ranked by how many unique seed services they help
    predict.
    """
    if not 0 <= step_prefix <= 32:
        raise ValueError(f"step prefix out of range: {step_prefix}")
    covered: dict[tuple[int, Subnet], set[tuple[int, int]]] = {}

    def credit(port: int, subnet: Subnet, service: ServiceRecord) -> None:
        covered.setdefault((port, subnet), set()).add(service.key)

    hosts = group_by_host(seed_services)
    for ip in sorted(hosts):
        recs = hosts[ip]
        subnet = Subnet.of(ip, step_prefix)
        if len(recs) == 1:
            credit(recs[0].port, subnet, recs[0])
            continue
        net_values = extract_net_features(ip, model.net_kinds, asn_table)
        per_service = [(rec.port, derive_conditions(rec, net_values))
                       for rec in recs]
        for target in recs:
            candidates = (cond for port, conds in per_service
                          if port != target.port for cond in conds)
            found = best_condition_among(model, candidates, target.port)
            if found is None:
                credit(target.port, subnet, target)
            else:
                credit(found[0].port_b, subnet, target)

    entries = [PriorsEntry(port, subnet, len(services))
               for (port, subnet), services in covered.items()]
    entries.sort(key=lambda e: (-e.coverage, e.port, e.subnet))
    return entries


def build_predictive_features(seed_services: Iterable[ServiceRecord],
                              model: CoOccurrenceModel,
                              floor: float = DEFAULT_PROBABILITY_FLOOR,
                              asn_table: Optional[AsnTable] = None
                              ) -> list[PredictiveFeatureEntry]:
    """Most-predictive-feature list: per (seed service, sibling port),
    the argmax condition derivable from that service, floor applied.
    """
    if floor <= 0:
        raise ValueError("floor must be > 0")
    best: dict[tuple[Condition, int], float] = {}
    hosts = group_by_host(seed_services)
    for ip in sorted(hosts):
        recs = hosts[ip]
        if len(recs) < 2:
            continue
        net_values = extract_net_features(ip, model.net_kinds, asn_table)
        per_service = [(rec, derive_conditions(rec, net_values)) for rec in recs]
        ports = [rec.port for rec in recs]
        for rec, conds in per_service:
            for a in ports:
                if a == rec.port:
                    continue
                found = best_condition_among(model, conds, a)
                if found is None or found[1] < floor:
                    continue
                best[(found[0], a)] = found[1]
    entries = [PredictiveFeatureEntry(cond, port, prob)
               for (cond, port), prob in best.items()]
    entries.sort(key=lambda e: (-e.probability, e.target_port,
                                condition_sort_key(e.condition)))
    return entries


def build_prediction_list(prior_services: Iterable[ServiceRecord],
                          predictive: Sequence[PredictiveFeatureEntry],
                          already_known: frozenset[tuple[int, int]] = frozenset(),
                          net_kinds: Optional[frozenset[FeatureKind]] = None,
                          asn_table: Optional[AsnTable] = None,
                          exclude_ips: frozenset[int] = frozenset()
                          ) -> list[Prediction]:
    """Match discovered services against the predictive-feature list.

    Every (ip, target) a matching entry implies is emitted once; when
    several conditions predict the same (ip, port) the highest
    probability wins. Output is sorted by descending probability.
    """
    if net_kinds is None:
        kinds_present = {e.condition.net.kind for e in predictive if e.condition.net}
        net_kinds = frozenset(kinds_present)
    index: dict[Condition, list[tuple[int, float]]] = {}
    for entry in predictive:
        index.setdefault(entry.condition, []).append(
            (entry.target_port, entry.probability))

    best: dict[tuple[int, int], tuple[float, tuple, Condition]] = {}
    net_cache: dict[int, list] = {}
    for rec in prior_services:
        if rec.ip in exclude_ips:
            continue
        net_values = net_cache.get(rec.ip)
        if net_values is None:
            net_values = net_cache[rec.ip] = extract_net_features(
                rec.ip, net_kinds, asn_table)
        for cond in derive_conditions(rec, net_values):
            targets = index.get(cond)
            if not targets:
                continue
            for port, prob in targets:
                key = (rec.ip, port)
                if key in already_known:
                    continue
                cand = (prob, condition_sort_key(cond))
                prev = best.get(key)
                if prev is None or cand[0] > prev[0] or (cand[0] == prev[0]
                                                         and cand[1] < prev[1]):
                    best[key] = (prob, cand[1], cond)
    predictions = [Prediction(ip, port, prob, via)
                   for (ip, port), (prob, _, via) in best.items()]
    predictions.sort(key=lambda p: (-p.probability, p.ip, p.port))
    return predictions


# ---------------------------------------------------------------------------
# Plain-text exports
# ---------------------------------------------------------------------------

def write_priors_list(entries: Sequence[PriorsEntry], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["port", "subnet", "coverage"])
        for e in entries:
            writer.writerow([e.port, str(e.subnet), e.coverage])


def read_priors_list(path) -> list[PriorsEntry]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for port, subnet, coverage in reader:
            out.append(PriorsEntry(int(port), Subnet.parse(subnet), int(coverage)))
    return out


def write_prediction_list(predictions: Sequence[Prediction], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ip", "port", "probability"])
        for p in predictions:
            writer.writerow([ip_to_text(p.ip), p.port, repr(p.probability)])


def read_prediction_list(path) -> list[tuple[int, int, float]]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for ip, port, prob in reader:
            out.append((ip_from_text(ip), int(port), float(prob)))
    return out
