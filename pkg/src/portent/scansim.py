"""Simulated scan execution with exact probe accounting.

The backend interface is the seam where a real scanner chain would sit;
the simulator answers probes straight from a Corpus, so every response
is honest: found records exist in the corpus, and every corpus record in
a probed cell is found.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .corpus import Corpus, ServiceRecord
from .ipnet import Subnet
from .planner import Prediction, PriorsEntry


class ScanBackend(Protocol):
    universe: Subnet

    def probe(self, ip: int, port: int) -> Optional[ServiceRecord]: ...

    def sweep(self, subnet: Subnet, port: int) -> list[ServiceRecord]: ...


class SimulatedBackend:
    """Answers probes from a ground-truth corpus; side-effect free."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self.universe = corpus.universe

    def probe(self, ip: int, port: int) -> Optional[ServiceRecord]:
        if not self.universe.contains(ip):
            return None
        return self.corpus.lookup(ip, port)

    def sweep(self, subnet: Subnet, port: int) -> list[ServiceRecord]:
        found = self.corpus.services_on(port, subnet)
        return sorted(found, key=lambda r: r.ip)


@dataclass
class BandwidthLedger:
    """Per-phase probe/response accounting.

    Bandwidth is reported in 100%-scan units: multiples of one full
    sweep of the address universe on a single port.
    """

    probes_per_full_scan: int
    probes: dict[str, int] = field(default_factory=dict)
    responses: dict[str, int] = field(default_factory=dict)

    def add(self, phase: str, probes: int, responses: int) -> None:
        if probes < 0 or responses < 0 or responses > probes:
            raise ValueError(f"bad ledger delta for {phase}: "
                             f"{probes} probes, {responses} responses")
        self.probes[phase] = self.probes.get(phase, 0) + probes
        self.responses[phase] = self.responses.get(phase, 0) + responses

    def record(self, result: "ScanResult") -> None:
        self.add(result.phase, result.probes, len(result.found))

    def total_probes(self) -> int:
        return sum(self.probes.values())

    def full_scan_units(self, probes: Optional[int] = None) -> float:
        if probes is None:
            probes = self.total_probes()
        return probes / self.probes_per_full_scan

    def to_obj(self) -> dict:
        return {
            "probes_per_full_scan": self.probes_per_full_scan,
            "phases": {
                phase: {"probes": self.probes[phase],
                        "responses": self.responses.get(phase, 0)}
                for phase in sorted(self.probes)
            },
            "total_probes": self.total_probes(),
            "total_full_scan_units": self.full_scan_units(),
        }


@dataclass
class ScanResult:
    """Responsive services from one scan phase, with discovery positions.

    found_at pairs each record with the cumulative probe count (within
    this phase) at which it was discovered.
    """

    phase: str
    probes: int
    found_at: list[tuple[int, ServiceRecord]]

    @property
    def found(self) -> list[ServiceRecord]:
        return [rec for _, rec in self.found_at]

    def found_keys(self) -> set[tuple[int, int]]:
        return {rec.key for _, rec in self.found_at}


def sample_universe(universe: Subnet, fraction: float, rng_seed: int) -> np.ndarray:
    """Deterministic uniform sample of round(fraction * |universe|)
    distinct addresses, returned sorted."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"sample fraction must be in (0, 1], got {fraction}")
    size = universe.size
    n = int(round(fraction * size))
    rng = np.random.default_rng(rng_seed)
    lo, hi = universe.base, universe.base + size
    if n >= size:
        return np.arange(lo, hi, dtype=np.int64)
    if size <= (1 << 24):
        picks = rng.permutation(size)[:n] + lo
        return np.sort(picks.astype(np.int64))
    # Sparse case: draw with replacement and top up collisions.
    picks = np.unique(rng.integers(lo, hi, size=int(n * 1.05) + 16, dtype=np.int64))
    while picks.size < n:
        extra = rng.integers(lo, hi, size=(n - picks.size) * 2 + 16, dtype=np.int64)
        picks = np.unique(np.concatenate([picks, extra]))
    if picks.size > n:
        keep = rng.permutation(picks.size)[:n]
        picks = np.sort(picks[keep])
    return picks


def run_seed_scan(backend: ScanBackend, universe: Subnet, sample_fraction: float,
                  ports: Optional[Iterable[int]], rng_seed: int,
                  phase: str = "seed") -> tuple[ScanResult, np.ndarray]:
    """Probe a uniform random host sample on every given port.

    ports=None means the full 0..65535 range. Returns the scan result and
    the sampled addresses (the induced seed/test split needs them).
    """
    sample = sample_universe(universe, sample_fraction, rng_seed)
    if ports is None:
        port_set = None
        n_ports = 65536
    else:
        port_set = frozenset(ports)
        n_ports = len(port_set)
    probes = int(sample.size) * n_ports
    sampled = set(int(ip) for ip in sample)
    found = []
    corpus = getattr(backend, "corpus", None)
    if corpus is not None:
        # Fast path: intersect the sample with responsive hosts.
        for ip in corpus.responsive_ips():
            if ip in sampled:
                for rec in corpus.services_on_ip(ip):
                    if port_set is None or rec.port in port_set:
                        found.append(rec)
    else:
        iter_ports = range(65536) if port_set is None else sorted(port_set)
        for ip in sorted(sampled):
            for port in iter_ports:
                rec = backend.probe(ip, port)
                if rec is not None:
                    found.append(rec)
    found.sort(key=lambda r: r.key)
    return ScanResult(phase, probes, [(probes, rec) for rec in found]), sample


def run_priors_scan(backend: ScanBackend, priors: Sequence[PriorsEntry],
                    budget: Optional[int] = None,
                    phase: str = "priors") -> ScanResult:
    """Sweep (port, subnet) entries in list order.

    Entries are atomic: an entry only runs if its whole sweep fits in the
    remaining budget, and processing stops at the first entry that does
    not fit.
    """
    spent = 0
    found_at: list[tuple[int, ServiceRecord]] = []
    seen: set[tuple[int, int]] = set()
    for entry in priors:
        cost = backend.universe.overlap_size(entry.subnet)
        if budget is not None and spent + cost > budget:
            break
        spent += cost
        for rec in backend.sweep(entry.subnet, entry.port):
            if rec.key not in seen:
                seen.add(rec.key)
                found_at.append((spent, rec))
    return ScanResult(phase, spent, found_at)


def run_prediction_scan(backend: ScanBackend, predictions: Sequence[Prediction],
                        budget: Optional[int] = None,
                        phase: str = "predictions") -> ScanResult:
    """Probe predictions in order, one probe each, until the budget runs out."""
    spent = 0
    found_at: list[tuple[int, ServiceRecord]] = []
    for pred in predictions:
        if budget is not None and spent >= budget:
            break
        spent += 1
        rec = backend.probe(pred.ip, pred.port)
        if rec is not None:
            found_at.append((spent, rec))
    return ScanResult(phase, spent, found_at)
