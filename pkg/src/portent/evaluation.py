"""Metrics, baselines, and coverage/precision curves.

Two coverage metrics are tracked: the raw fraction of services found,
and a per-port-normalized fraction that weighs rare and popular ports
equally. Truth sets are always restricted to test-side IPs and eligible
ports before any metric is computed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .model import Condition
from .scansim import ScanResult


class UndefinedMetricError(ValueError):
    """A metric was requested on an empty denominator."""


Key = tuple[int, int]


def fraction_services(found: set[Key], truth: set[Key]) -> float:
    """Services found over services in the ground truth."""
    if not truth:
        raise UndefinedMetricError("empty ground truth")
    if not found <= truth:
        raise ValueError("found services must be a subset of the ground truth")
    return len(found) / len(truth)


def normalized_services(found: set[Key], truth: set[Key],
                        ports: Iterable[int]) -> float:
    """Mean per-port IP coverage, weighing every port equally."""
    ports = sorted(set(ports))
    if not ports:
        raise UndefinedMetricError("empty eligible port set")
    if not found <= truth:
        raise ValueError("found services must be a subset of the ground truth")
    truth_by_port: dict[int, set[int]] = {p: set() for p in ports}
    found_by_port: dict[int, set[int]] = {p: set() for p in ports}
    for ip, port in truth:
        if port in truth_by_port:
            truth_by_port[port].add(ip)
    for ip, port in found:
        if port in found_by_port:
            found_by_port[port].add(ip)
    total = 0.0
    for p in ports:
        if not truth_by_port[p]:
            raise UndefinedMetricError(f"port {p} has no ground-truth IPs")
        total += len(found_by_port[p]) / len(truth_by_port[p])
    return total / len(ports)


def precision(found_count: int, probes: int) -> float:
    if probes <= 0:
        raise UndefinedMetricError("precision needs at least one probe")
    return found_count / probes


def optimal_port_order(truth: set[Key]) -> list[int]:
    """Ports by descending ground-truth service count, ties ascending."""
    counts: dict[int, int] = {}
    for _, port in truth:
        counts[port] = counts.get(port, 0) + 1
    return sorted(counts, key=lambda p: (-counts[p], p))


@dataclass(frozen=True, slots=True)
class CoveragePoint:
    probes: int
    full_scan_units: float
    fraction_services: float
    normalized_services: float
    precision: float
    phase: str


def value_at(curve: Sequence[CoveragePoint], probes: int,
             attr: str = "fraction_services") -> float:
    """Curve value after `probes` probes (step interpolation)."""
    best = 0.0
    for point in curve:
        if point.probes <= probes:
            best = max(best, getattr(point, attr))
        else:
            break
    return best


def probes_to_reach(curve: Sequence[CoveragePoint], target: float,
                    attr: str = "fraction_services") -> Optional[int]:
    for point in curve:
        if getattr(point, attr) >= target:
            return point.probes
    return None


class _CoverageTracker:
    """Incremental fraction/normalized bookkeeping against a truth set."""

    def __init__(self, truth: set[Key], eligible: Iterable[int]):
        self.truth = truth
        self.ports = sorted(set(eligible))
        self.truth_ip_counts: dict[int, int] = {p: 0 for p in self.ports}
        seen_ips: dict[int, set[int]] = {p: set() for p in self.ports}
        for ip, port in truth:
            seen_ips[port].add(ip)
        for p in self.ports:
            self.truth_ip_counts[p] = len(seen_ips[p])
        self.found: set[Key] = set()
        self.found_ips: dict[int, set[int]] = {p: set() for p in self.ports}

    def add(self, key: Key) -> None:
        if key not in self.truth or key in self.found:
            return
        self.found.add(key)
        ip, port = key
        self.found_ips[port].add(ip)

    def fraction(self) -> float:
        return len(self.found) / len(self.truth)

    def normalized(self) -> float:
        total = sum(len(self.found_ips[p]) / self.truth_ip_counts[p]
                    for p in self.ports)
        return total / len(self.ports)


def pipeline_curve(results: Sequence[ScanResult], truth: set[Key],
                   eligible: Iterable[int], universe_size: int,
                   sample_every: int = 65536) -> list[CoveragePoint]:
    """Coverage trajectory across scan phases.

    Points are emitted at phase boundaries and roughly every
    sample_every probes in between. Precision counts truth-restricted
    finds over all probes spent, consistent with the coverage numerators.
    """
    if not truth:
        raise UndefinedMetricError("empty ground truth")
    tracker = _CoverageTracker(truth, eligible)
    points: list[CoveragePoint] = []
    offset = 0
    last_emitted = 0

    def emit(probes: int, phase: str) -> None:
        nonlocal last_emitted
        if probes <= 0:
            return
        points.append(CoveragePoint(
            probes=probes,
            full_scan_units=probes / universe_size,
            fraction_services=tracker.fraction(),
            normalized_services=tracker.normalized(),
            precision=len(tracker.found) / probes,
            phase=phase,
        ))
        last_emitted = probes

    for result in results:
        marks = result.found_at
        i = 0
        while i < len(marks):
            mark = marks[i][0]
            while i < len(marks) and marks[i][0] == mark:
                tracker.add(marks[i][1].key)
                i += 1
            probes = offset + mark
            if probes - last_emitted >= sample_every:
                emit(probes, result.phase)
        offset += result.probes
        emit(offset, result.phase)
    return points


def port_order_curve(truth: set[Key], universe_size: int,
                     eligible: Iterable[int]) -> list[CoveragePoint]:
    """Exhaustive probing of whole ports in descending service-count order."""
    if not truth:
        raise UndefinedMetricError("empty ground truth")
    tracker = _CoverageTracker(truth, eligible)
    order = optimal_port_order(truth)
    by_port: dict[int, list[Key]] = {}
    for key in sorted(truth):
        by_port.setdefault(key[1], []).append(key)
    points = []
    probes = 0
    for port in order:
        probes += universe_size
        for key in by_port[port]:
            tracker.add(key)
        points.append(CoveragePoint(
            probes=probes,
            full_scan_units=probes / universe_size,
            fraction_services=tracker.fraction(),
            normalized_services=tracker.normalized(),
            precision=len(tracker.found) / probes,
            phase="port_order",
        ))
    return points


def oracle_curve(truth: set[Key], universe_size: int, eligible: Iterable[int],
                 sample_every: int = 1024) -> list[CoveragePoint]:
    """A predictor that only probes true services (one probe per find).

    Services are taken rarest-port-first, which maximizes the normalized
    metric at every prefix; precision is 1 throughout.
    """
    if not truth:
        raise UndefinedMetricError("empty ground truth")
    tracker = _CoverageTracker(truth, eligible)
    ordered = sorted(truth, key=lambda k: (tracker.truth_ip_counts[k[1]], k[1], k[0]))
    points = []
    for i, key in enumerate(ordered, start=1):
        tracker.add(key)
        if i % sample_every == 0 or i == len(ordered):
            points.append(CoveragePoint(
                probes=i,
                full_scan_units=i / universe_size,
                fraction_services=tracker.fraction(),
                normalized_services=tracker.normalized(),
                precision=1.0,
                phase="oracle",
            ))
    return points


# ---------------------------------------------------------------------------
# Which features predicted the services we found?
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class FeatureReportRow:
    condition_class: str
    kinds: str
    normalized_share: float
    service_share: float


def _kinds_label(cond: Condition) -> str:
    parts = ["port"]
    if cond.app is not None:
        parts.append(cond.app.kind.value)
    if cond.net is not None:
        parts.append(cond.net.kind.value)
    return "+".join(parts)


def feature_report(found_via: Sequence[tuple[Key, Condition]], truth: set[Key],
                   eligible: Iterable[int]) -> list[FeatureReportRow]:
    """Aggregate winning conditions by class and feature kinds.

    Shares are fractions of the ground truth each class/kind combination
    predicted; each found service is attributed to exactly one row, so
    shares sum to at most 1 per column.
    """
    if not truth:
        raise UndefinedMetricError("empty ground truth")
    ports = sorted(set(eligible))
    truth_ips: dict[int, set[int]] = {p: set() for p in ports}
    for ip, port in truth:
        truth_ips[port].add(ip)

    groups: dict[tuple[str, str], list[Key]] = {}
    seen: set[Key] = set()
    for key, cond in found_via:
        if key not in truth or key in seen:
            continue
        seen.add(key)
        groups.setdefault((cond.class_name, _kinds_label(cond)), []).append(key)

    rows = []
    for (cls, kinds), keys in groups.items():
        norm = 0.0
        per_port: dict[int, set[int]] = {}
        for ip, port in keys:
            per_port.setdefault(port, set()).add(ip)
        for port, ips in per_port.items():
            norm += len(ips) / len(truth_ips[port])
        rows.append(FeatureReportRow(
            condition_class=cls,
            kinds=kinds,
            normalized_share=norm / len(ports),
            service_share=len(keys) / len(truth),
        ))
    rows.sort(key=lambda r: (-r.normalized_share, -r.service_share, r.kinds))
    return rows


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

CURVE_HEADER = ["probes", "full_scan_units", "fraction_services",
                "normalized_services", "precision", "phase"]


def write_curve(points: Sequence[CoveragePoint], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for pt in points:
            writer.writerow([pt.probes, repr(pt.full_scan_units),
                             repr(pt.fraction_services),
                             repr(pt.normalized_services),
                             repr(pt.precision), pt.phase])


def read_curve(path) -> list[CoveragePoint]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for probes, units, frac, norm, prec, phase in reader:
            out.append(CoveragePoint(int(probes), float(units), float(frac),
                                     float(norm), float(prec), phase))
    return out


def write_feature_report(rows: Sequence[FeatureReportRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition_class", "kinds", "normalized_share", "service_share"])
        for row in rows:
            writer.writerow([row.condition_class, row.kinds,
                             repr(row.normalized_share), repr(row.service_share)])


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

def sweep(corpus, base_config, seed_fractions: Sequence[float],
          step_prefixes: Sequence[int], asn_table=None, artifacts_root=None):
    """Run the full pipeline over a seed-fraction x step-prefix grid.

    Returns {(seed_fraction, step_prefix): PipelineResult | Exception}.
    A failing cell is recorded and does not stop the others.
    """
    from pathlib import Path

    from .pipeline import run_pipeline, replace_config

    if not seed_fractions or not step_prefixes:
        raise ValueError("sweep grid is empty")
    out = {}
    for fraction in seed_fractions:
        for prefix in step_prefixes:
            try:
                cell = replace_config(base_config, seed_fraction=fraction,
                                      step_prefix=prefix)
                result = run_pipeline(corpus, cell, asn_table=asn_table)
            except Exception as exc:  # isolate cell failures
                out[(fraction, prefix)] = exc
                continue
            out[(fraction, prefix)] = result
            if artifacts_root is not None:
                cell_dir = Path(artifacts_root) / f"seed{fraction:g}_step{prefix}"
                cell_dir.mkdir(parents=True, exist_ok=True)
                result.write_artifacts(cell_dir)
    return out
