import random

import pytest

from portent.corpus import Corpus, make_record
from portent.ipnet import Subnet, ip_from_text
from portent.planner import Prediction, PriorsEntry
from portent.model import Condition
from portent.scansim import (
    BandwidthLedger,
    SimulatedBackend,
    run_prediction_scan,
    run_priors_scan,
    run_seed_scan,
    sample_universe,
)

from conftest import random_services

ANY = Subnet.parse("0.0.0.0/0")


def _backend(records, universe=ANY):
    return SimulatedBackend(Corpus(records, universe))


# ---------------------------------------------------------------------------
# sampling + seed scan
# ---------------------------------------------------------------------------

def test_sample_universe_full_fraction():
    sub = Subnet.parse("10.0.0.0/24")
    sample = sample_universe(sub, 1.0, rng_seed=1)
    assert len(sample) == 256
    assert int(sample[0]) == sub.base and int(sample[-1]) == sub.base + 255


def test_sample_universe_deterministic_and_distinct():
    sub = Subnet.parse("10.0.0.0/16")
    a = sample_universe(sub, 0.1, rng_seed=5)
    b = sample_universe(sub, 0.1, rng_seed=5)
    c = sample_universe(sub, 0.1, rng_seed=6)
    assert (a == b).all()
    assert len(set(int(x) for x in a)) == len(a) == round(0.1 * sub.size)
    assert set(int(x) for x in c) != set(int(x) for x in a)
    assert all(sub.contains(int(ip)) for ip in a[:50])


def test_sample_universe_sparse_path():
    sub = Subnet.parse("8.0.0.0/6")  # 64M addresses forces the sparse branch
    sample = sample_universe(sub, 0.0001, rng_seed=2)
    assert len(sample) == round(0.0001 * sub.size)
    assert len(set(int(x) for x in sample)) == len(sample)


def test_seed_scan_probe_arithmetic_full_slash24():
    universe = Subnet.parse("10.0.0.0/24")
    backend = _backend([make_record(ip_from_text("10.0.0.5"), 80, "http")], universe)
    result, sample = run_seed_scan(backend, universe, 1.0, ports={80}, rng_seed=1)
    assert result.probes == 256
    assert len(sample) == 256
    assert [r.key for r in result.found] == [(ip_from_text("10.0.0.5"), 80)]


def test_seed_scan_ledger_is_sample_times_ports():
    universe = Subnet.parse("10.0.0.0/18")  # 16384 addresses
    backend = _backend([], universe)
    result, sample = run_seed_scan(backend, universe, 0.1, ports=set(range(100)),
                                   rng_seed=3)
    assert result.probes == len(sample) * 100
    assert result.probes == round(0.1 * universe.size) * 100


def test_seed_scan_finds_exactly_sampled_responsive_services(rng):
    universe = Subnet.parse("10.0.0.0/14")
    records = random_services(rng, 300)
    backend = _backend(records, universe)
    result, sample = run_seed_scan(backend, universe, 0.3, ports=None, rng_seed=9)
    sampled = set(int(x) for x in sample)
    expected = sorted(r.key for r in records if r.ip in sampled)
    assert sorted(r.key for r in result.found) == expected


def test_seed_scan_port_restriction():
    universe = Subnet.parse("10.0.0.0/24")
    ip = ip_from_text("10.0.0.7")
    backend = _backend([make_record(ip, 80, "http"), make_record(ip, 22, "ssh")],
                       universe)
    result, _ = run_seed_scan(backend, universe, 1.0, ports={80}, rng_seed=1)
    assert [r.port for r in result.found] == [80]


# ---------------------------------------------------------------------------
# priors scan
# ---------------------------------------------------------------------------

def test_priors_entry_cost_is_subnet_size():
    backend = _backend([])
    entry = PriorsEntry(80, Subnet.parse("1.1.0.0/16"), 1)
    result = run_priors_scan(backend, [entry])
    assert result.probes == 65536


def test_priors_budget_smaller_than_first_entry_scans_nothing():
    backend = _backend([make_record(ip_from_text("1.1.0.9"), 80, "http")])
    entry = PriorsEntry(80, Subnet.parse("1.1.0.0/16"), 1)
    result = run_priors_scan(backend, [entry], budget=65535)
    assert result.probes == 0
    assert result.found == []


def test_priors_budget_stops_at_entry_boundary():
    records = [make_record(ip_from_text(f"1.{i}.0.9"), 80, "http") for i in range(4)]
    backend = _backend(records)
    entries = [PriorsEntry(80, Subnet.parse(f"1.{i}.0.0/16"), 1) for i in range(4)]
    result = run_priors_scan(backend, entries, budget=2 * 65536 + 10)
    assert result.probes == 2 * 65536  # two whole entries, never a partial sweep
    assert sorted(r.ip for r in result.found) == sorted(r.ip for r in records[:2])


def test_priors_sweep_finds_planted_template():
    sub = Subnet.parse("10.7.0.0/16")
    records = [make_record(sub.base + i, 8080, "http") for i in range(50)]
    records.append(make_record(ip_from_text("10.8.0.1"), 8080, "http"))  # outside
    backend = _backend(records, Subnet.parse("10.0.0.0/8"))
    result = run_priors_scan(backend, [PriorsEntry(8080, sub, 50)])
    assert len(result.found) == 50
    assert all(sub.contains(r.ip) for r in result.found)


def test_priors_cost_intersects_universe():
    universe = Subnet.parse("10.7.0.0/16")
    backend = _backend([], universe)
    result = run_priors_scan(backend, [PriorsEntry(80, Subnet.parse("0.0.0.0/0"), 1)])
    assert result.probes == universe.size


# ---------------------------------------------------------------------------
# prediction scan
# ---------------------------------------------------------------------------

def _predictions(records, extra_misses=0):
    via = Condition(22)
    preds = [Prediction(r.ip, r.port, 1.0, via) for r in records]
    base = ip_from_text("99.0.0.0")
    preds += [Prediction(base + i, 12345, 0.5, via) for i in range(extra_misses)]
    return preds


def test_prediction_scan_counts_and_precision():
    records = [make_record(ip_from_text("10.0.0.1") + i, 80, "http") for i in range(40)]
    backend = _backend(records)
    preds = _predictions(records, extra_misses=60)
    result = run_prediction_scan(backend, preds)
    assert result.probes == 100
    assert len(result.found) == 40
    assert len(result.found) / result.probes == pytest.approx(0.4)


def test_prediction_scan_budget_exact_prefix():
    records = [make_record(ip_from_text("10.0.0.1") + i, 80, "http") for i in range(20)]
    backend = _backend(records)
    result = run_prediction_scan(backend, _predictions(records), budget=10)
    assert result.probes == 10
    assert len(result.found) == 10  # every probed prediction responds
    assert [r.ip for r in result.found] == [r.ip for r in records[:10]]


def test_prediction_scan_budget_zero():
    backend = _backend([])
    result = run_prediction_scan(backend, _predictions([]), budget=0)
    assert result.probes == 0 and result.found == []


# ---------------------------------------------------------------------------
# ledger + honesty invariants
# ---------------------------------------------------------------------------

def test_ledger_conservation_recomputable_from_plan(rng):
    universe = Subnet.parse("10.0.0.0/14")
    records = random_services(rng, 200)
    backend = _backend(records, universe)
    ledger = BandwidthLedger(probes_per_full_scan=universe.size)

    seed_result, sample = run_seed_scan(backend, universe, 0.05, ports={22, 80},
                                        rng_seed=4)
    ledger.record(seed_result)
    entries = [PriorsEntry(80, Subnet.parse("10.0.0.0/16"), 1),
               PriorsEntry(22, Subnet.parse("10.1.0.0/16"), 1)]
    priors_result = run_priors_scan(backend, entries, budget=None)
    ledger.record(priors_result)
    preds = _predictions(records[:30], extra_misses=5)
    pred_result = run_prediction_scan(backend, preds)
    ledger.record(pred_result)

    # independent recomputation from the plan arithmetic
    expected = (len(sample) * 2) + (2 * 65536) + len(preds)
    assert ledger.total_probes() == expected
    assert ledger.probes["seed"] == len(sample) * 2
    assert ledger.probes["priors"] == 2 * 65536
    assert ledger.probes["predictions"] == len(preds)
    assert ledger.full_scan_units() == pytest.approx(expected / universe.size)


def test_simulator_honesty(rng):
    universe = Subnet.parse("10.0.0.0/14")
    records = random_services(rng, 150)
    corpus = Corpus(records, universe)
    backend = SimulatedBackend(corpus)
    keys = {r.key for r in records}
    entry = PriorsEntry(80, Subnet.parse("10.0.0.0/16"), 1)
    result = run_priors_scan(backend, [entry])
    for rec in result.found:
        assert rec.key in keys  # nothing invented
    swept = {k for k in keys
             if k[1] == 80 and Subnet.parse("10.0.0.0/16").contains(k[0])}
    assert {r.key for r in result.found} == swept  # no false negatives


def test_ledger_rejects_bad_delta():
    ledger = BandwidthLedger(probes_per_full_scan=100)
    with pytest.raises(ValueError):
        ledger.add("seed", 5, 6)


def test_found_marks_are_nondecreasing(rng):
    universe = Subnet.parse("10.0.0.0/14")
    backend = _backend(random_services(rng, 100), universe)
    entries = [PriorsEntry(80, Subnet.parse("10.0.0.0/16"), 1),
               PriorsEntry(22, Subnet.parse("10.1.0.0/16"), 1)]
    result = run_priors_scan(backend, entries)
    marks = [m for m, _ in result.found_at]
    assert marks == sorted(marks)
    assert all(0 < m <= result.probes for m in marks)
