"""Four-phase pipeline orchestration: seed scan, model, priors scan,
prediction scan, plus the evaluation that scores a run.

Every phase's inputs and outputs are plain files, so runs can be chained,
inspected, and reproduced byte-for-byte from (corpus bytes, config bytes).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import evaluation
from .corpus import (
    Corpus,
    SeedSplit,
    ServiceRecord,
    eligible_ports,
    filter_pseudo_services,
    ingest,
    split_from_sample,
    write_records,
)
from .features import (
    AsnTable,
    DEFAULT_NET_KINDS,
    FeatureKind,
    VOLATILE_KINDS,
)
from .ipnet import Subnet
from .model import CoOccurrenceModel, build
from .planner import (
    DEFAULT_PROBABILITY_FLOOR,
    Prediction,
    PriorsEntry,
    build_prediction_list,
    build_predictive_features,
    build_priors_list,
    write_prediction_list,
    write_priors_list,
)
from .scansim import BandwidthLedger, ScanResult, SimulatedBackend, run_prediction_scan, run_priors_scan, run_seed_scan
from .synth import generate, load_spec


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    universe: Subnet
    seed_fraction: float
    step_prefix: int
    rng_seed: int = 0
    corpus_path: Optional[str] = None
    synthetic_spec_path: Optional[str] = None
    output_dir: Optional[str] = None
    probability_floor: float = DEFAULT_PROBABILITY_FLOOR
    min_support: int = 2
    min_ips: int = 2
    net_kinds: frozenset[FeatureKind] = DEFAULT_NET_KINDS
    asn_table_path: Optional[str] = None
    seed_ports: Optional[tuple[int, ...]] = None  # None probes all 65536 ports
    priors_budget: Optional[int] = None
    prediction_budget: Optional[int] = None
    partitions: int = 1
    filter_pseudo: bool = True
    max_services_per_host: int = 10
    dynamic_kinds: frozenset[FeatureKind] = VOLATILE_KINDS
    keep_collapsed_representative: bool = True
    exclude_seed_targets: bool = True
    curve_sample_every: int = 65536
    index_prefix: int = 16
    sweep_seed_fractions: tuple[float, ...] = ()
    sweep_step_prefixes: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 < self.seed_fraction <= 1.0:
            raise ConfigError(f"seed_fraction must be in (0, 1]: {self.seed_fraction}")
        if not 0 <= self.step_prefix <= 32:
            raise ConfigError(f"step_prefix must be in [0, 32]: {self.step_prefix}")
        if self.probability_floor <= 0:
            raise ConfigError("probability_floor must be > 0")
        if self.min_support < 1:
            raise ConfigError("min_support must be >= 1")
        if self.min_ips < 1:
            raise ConfigError("min_ips must be >= 1")
        if self.partitions < 1:
            raise ConfigError("partitions must be >= 1")
        if self.curve_sample_every < 1:
            raise ConfigError("curve_sample_every must be >= 1")
        if self.max_services_per_host < 1:
            raise ConfigError("max_services_per_host must be >= 1")


def replace_config(config: PipelineConfig, **kwargs) -> PipelineConfig:
    return dataclasses.replace(config, **kwargs)


_CONFIG_KEYS = {
    "universe", "seed_fraction", "step_prefix", "rng_seed", "corpus_path",
    "synthetic_spec_path", "output_dir", "probability_floor", "min_support",
    "min_ips", "net_kinds", "asn_table_path", "seed_ports", "priors_budget",
    "prediction_budget", "partitions", "filter_pseudo", "max_services_per_host",
    "dynamic_kinds", "keep_collapsed_representative", "exclude_seed_targets",
    "curve_sample_every", "index_prefix", "sweep",
}


def config_from_obj(obj: dict) -> PipelineConfig:
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        universe = Subnet.parse(obj["universe"])
    except KeyError:
        raise ConfigError("config needs a 'universe' prefix") from None
    except ValueError as exc:
        raise ConfigError(f"bad universe: {exc}") from None
    seed_ports = obj.get("seed_ports")
    if seed_ports is not None:
        seed_ports = tuple(int(p) for p in seed_ports)
    sweep_obj = obj.get("sweep") or {}
    try:
        return PipelineConfig(
            universe=universe,
            seed_fraction=float(obj["seed_fraction"]),
            step_prefix=int(obj["step_prefix"]),
            rng_seed=int(obj.get("rng_seed", 0)),
            corpus_path=obj.get("corpus_path"),
            synthetic_spec_path=obj.get("synthetic_spec_path"),
            output_dir=obj.get("output_dir"),
            probability_floor=float(obj.get("probability_floor", DEFAULT_PROBABILITY_FLOOR)),
            min_support=int(obj.get("min_support", 2)),
            min_ips=int(obj.get("min_ips", 2)),
            net_kinds=frozenset(FeatureKind.from_name(n)
                                for n in obj.get("net_kinds", ["subnet16", "asn"])),
            asn_table_path=obj.get("asn_table_path"),
            seed_ports=seed_ports,
            priors_budget=(None if obj.get("priors_budget") is None
                           else int(obj["priors_budget"])),
            prediction_budget=(None if obj.get("prediction_budget") is None
                               else int(obj["prediction_budget"])),
            partitions=int(obj.get("partitions", 1)),
            filter_pseudo=bool(obj.get("filter_pseudo", True)),
            max_services_per_host=int(obj.get("max_services_per_host", 10)),
            dynamic_kinds=frozenset(FeatureKind.from_name(n)
                                    for n in obj.get("dynamic_kinds",
                                                     sorted(k.value for k in VOLATILE_KINDS))),
            keep_collapsed_representative=bool(obj.get("keep_collapsed_representative", True)),
            exclude_seed_targets=bool(obj.get("exclude_seed_targets", True)),
            curve_sample_every=int(obj.get("curve_sample_every", 65536)),
            index_prefix=int(obj.get("index_prefix", 16)),
            sweep_seed_fractions=tuple(float(f) for f in sweep_obj.get("seed_fractions", ())),
            sweep_step_prefixes=tuple(int(p) for p in sweep_obj.get("step_prefixes", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def config_to_obj(config: PipelineConfig) -> dict:
    obj = {
        "universe": str(config.universe),
        "seed_fraction": config.seed_fraction,
        "step_prefix": config.step_prefix,
        "rng_seed": config.rng_seed,
        "corpus_path": config.corpus_path,
        "synthetic_spec_path": config.synthetic_spec_path,
        "output_dir": config.output_dir,
        "probability_floor": config.probability_floor,
        "min_support": config.min_support,
        "min_ips": config.min_ips,
        "net_kinds": sorted(k.value for k in config.net_kinds),
        "asn_table_path": config.asn_table_path,
        "seed_ports": list(config.seed_ports) if config.seed_ports is not None else None,
        "priors_budget": config.priors_budget,
        "prediction_budget": config.prediction_budget,
        "partitions": config.partitions,
        "filter_pseudo": config.filter_pseudo,
        "max_services_per_host": config.max_services_per_host,
        "dynamic_kinds": sorted(k.value for k in config.dynamic_kinds),
        "keep_collapsed_representative": config.keep_collapsed_representative,
        "exclude_seed_targets": config.exclude_seed_targets,
        "curve_sample_every": config.curve_sample_every,
        "index_prefix": config.index_prefix,
    }
    if config.sweep_seed_fractions or config.sweep_step_prefixes:
        obj["sweep"] = {
            "seed_fractions": list(config.sweep_seed_fractions),
            "step_prefixes": list(config.sweep_step_prefixes),
        }
    return obj


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_obj(obj)


def load_inputs(config: PipelineConfig) -> tuple[Corpus, Optional[AsnTable]]:
    """Materialize the corpus and ASN table a config points at."""
    if (config.corpus_path is None) == (config.synthetic_spec_path is None):
        raise ConfigError("config needs exactly one of corpus_path or synthetic_spec_path")
    if config.corpus_path is not None:
        corpus = ingest(config.corpus_path, config.universe, config.index_prefix)
    else:
        spec = load_spec(config.synthetic_spec_path)
        if spec.universe != config.universe:
            raise ConfigError(
                f"synthetic spec universe {spec.universe} does not match "
                f"config universe {config.universe}")
        corpus = generate(spec)
    asn_table = None
    if config.asn_table_path is not None:
        asn_table = AsnTable.load(config.asn_table_path)
    return corpus, asn_table


# ---------------------------------------------------------------------------
# The run itself
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    config: PipelineConfig
    corpus_services: int
    split: SeedSplit
    eligible: frozenset[int]
    seed_services: list[ServiceRecord]
    model: CoOccurrenceModel
    priors: list[PriorsEntry]
    predictive_count: int
    predictions: list[Prediction]
    seed_result: ScanResult
    priors_result: ScanResult
    prediction_result: ScanResult
    ledger: BandwidthLedger
    truth: frozenset[tuple[int, int]]
    curves: list[evaluation.CoveragePoint]
    curves_noseed: list[evaluation.CoveragePoint]
    curve_port_order: list[evaluation.CoveragePoint]
    curve_oracle: list[evaluation.CoveragePoint]
    feature_rows: list[evaluation.FeatureReportRow]
    predictive: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        found_truth = (self.seed_result.found_keys() | self.priors_result.found_keys()
                       | self.prediction_result.found_keys()) & self.truth
        pred_found = self.prediction_result.found_keys() & self.truth
        return {
            "corpus_services": self.corpus_services,
            "truth_services": len(self.truth),
            "eligible_ports": len(self.eligible),
            "seed_ips": len(self.split.seed_ips),
            "test_ips": len(self.split.test_ips),
            "seed_services": len(self.seed_services),
            "model_entries": len(self.model),
            "priors_entries": len(self.priors),
            "predictive_entries": self.predictive_count,
            "predictions": len(self.predictions),
            "found_truth_services": len(found_truth),
            "found_truth_fraction": (len(found_truth) / len(self.truth)
                                     if self.truth else None),
            "prediction_found_truth": len(pred_found),
            "prediction_precision": (len(self.prediction_result.found)
                                     / self.prediction_result.probes
                                     if self.prediction_result.probes else None),
            "ledger": self.ledger.to_obj(),
        }

    def write_artifacts(self, outdir) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_json(outdir / "config.json", config_to_obj(self.config))
        write_records(self.seed_result.found, outdir / "seed_scan.ndjson")
        self.model.dump(outdir / "model.json")
        write_priors_list(self.priors, outdir / "priors_list.csv")
        write_records(self.priors_result.found, outdir / "priors_scan.ndjson")
        write_prediction_list(self.predictions, outdir / "predictions.csv")
        write_records(self.prediction_result.found, outdir / "prediction_scan.ndjson")
        _write_json(outdir / "ledger.json", self.ledger.to_obj())
        evaluation.write_curve(self.curves, outdir / "curves.csv")
        evaluation.write_curve(self.curves_noseed, outdir / "curves_noseed.csv")
        evaluation.write_curve(self.curve_port_order, outdir / "curve_portorder.csv")
        evaluation.write_curve(self.curve_oracle, outdir / "curve_oracle.csv")
        evaluation.write_feature_report(self.feature_rows, outdir / "feature_report.csv")
        _write_json(outdir / "summary.json", self.summary())


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_pipeline(corpus: Corpus, config: PipelineConfig,
                 asn_table: Optional[AsnTable] = None) -> PipelineResult:
    """Execute all four phases against a ground-truth corpus and score them."""
    if config.filter_pseudo:
        corpus = filter_pseudo_services(
            corpus,
            dynamic_kinds=config.dynamic_kinds,
            max_services_per_host=config.max_services_per_host,
            keep_representative=config.keep_collapsed_representative,
        )
    backend = SimulatedBackend(corpus)
    ledger = BandwidthLedger(probes_per_full_scan=config.universe.size)

    # Phase 1: seed collection over a uniform address sample.
    seed_result, sample = run_seed_scan(
        backend, config.universe, config.seed_fraction,
        config.seed_ports, config.rng_seed)
    ledger.record(seed_result)
    split = split_from_sample(corpus, (int(ip) for ip in sample),
                              config.seed_fraction, config.rng_seed)
    eligible = eligible_ports(split, corpus, config.min_ips)
    seed_services = [rec
                     for ip in sorted(split.seed_ips)
                     for rec in corpus.services_on_ip(ip)
                     if rec.port in eligible]

    # Phase 2: model the seed set.
    model = build(seed_services,
                  net_kinds=config.net_kinds,
                  min_support=config.min_support,
                  partitions=config.partitions,
                  asn_table=asn_table,
                  built_from=f"seed rng={config.rng_seed} fraction={config.seed_fraction!r}")

    # Phase 3: find each host's most predictive service.
    priors = build_priors_list(seed_services, model, config.step_prefix,
                               asn_table=asn_table)
    priors_result = run_priors_scan(backend, priors, config.priors_budget)
    ledger.record(priors_result)

    # Phase 4: predict and probe the remaining services.
    predictive = build_predictive_features(seed_services, model,
                                           floor=config.probability_floor,
                                           asn_table=asn_table)
    already_known = frozenset(seed_result.found_keys() | priors_result.found_keys())
    exclude = split.seed_ips if config.exclude_seed_targets else frozenset()
    predictions = build_prediction_list(priors_result.found, predictive,
                                        already_known=already_known,
                                        net_kinds=model.net_kinds,
                                        asn_table=asn_table,
                                        exclude_ips=exclude)
    prediction_result = run_prediction_scan(backend, predictions,
                                            config.prediction_budget)
    ledger.record(prediction_result)

    # Evaluation: truth is the test side restricted to eligible ports.
    truth = frozenset(rec.key for rec in corpus.services
                      if rec.ip in split.test_ips and rec.port in eligible)
    phases = [seed_result, priors_result, prediction_result]
    curves = []
    curves_noseed = []
    curve_po = []
    curve_or = []
    feature_rows = []
    if truth:
        curves = evaluation.pipeline_curve(phases, truth, eligible,
                                           config.universe.size,
                                           config.curve_sample_every)
        curves_noseed = evaluation.pipeline_curve(phases[1:], truth, eligible,
                                                  config.universe.size,
                                                  config.curve_sample_every)
        curve_po = evaluation.port_order_curve(truth, config.universe.size, eligible)
        curve_or = evaluation.oracle_curve(truth, config.universe.size, eligible)
        via = {(p.ip, p.port): p.via for p in predictions}
        found_via = [(rec.key, via[rec.key])
                     for rec in prediction_result.found if rec.key in via]
        feature_rows = evaluation.feature_report(found_via, truth, eligible)

    result = PipelineResult(
        config=config,
        corpus_services=len(corpus),
        split=split,
        eligible=eligible,
        seed_services=seed_services,
        model=model,
        priors=priors,
        predictive_count=len(predictive),
        predictions=predictions,
        seed_result=seed_result,
        priors_result=priors_result,
        prediction_result=prediction_result,
        ledger=ledger,
        truth=truth,
        curves=curves,
        curves_noseed=curves_noseed,
        curve_port_order=curve_po,
        curve_oracle=curve_or,
        feature_rows=feature_rows,
        predictive=predictive,
    )
    return result
