"""portent: predictive all-port service discovery at desk scale.

The package models service co-occurrence from a small seed sample,
plans two scanning phases (a priors sweep that surfaces each host's
most predictive service, then per-host predictions), executes plans
against a simulated address space, and scores the result against
ground truth.
"""

from .corpus import (
    Corpus,
    CorpusError,
    SeedSplit,
    ServiceRecord,
    eligible_ports,
    filter_pseudo_services,
    ingest,
    make_record,
    split,
    write_records,
)
from .evaluation import (
    CoveragePoint,
    FeatureReportRow,
    UndefinedMetricError,
    feature_report,
    fraction_services,
    normalized_services,
    optimal_port_order,
    oracle_curve,
    pipeline_curve,
    port_order_curve,
    precision,
    sweep,
)
from .features import (
    AsnTable,
    DEFAULT_NET_KINDS,
    FeatureKind,
    FeatureValue,
    NET_KIND_CANDIDATES,
    extract_app_features,
    extract_net_features,
    rank_net_features,
)
from .ipnet import Subnet, ip_from_text, ip_to_text
from .model import (
    Condition,
    CoOccurrenceModel,
    best_condition_for,
    build,
    derive_conditions,
)
from .pipeline import (
    ConfigError,
    PipelineConfig,
    PipelineResult,
    load_config,
    load_inputs,
    run_pipeline,
)
from .planner import (
    Prediction,
    PredictiveFeatureEntry,
    PriorsEntry,
    build_prediction_list,
    build_predictive_features,
    build_priors_list,
)
from .scansim import (
    BandwidthLedger,
    ScanResult,
    SimulatedBackend,
    run_prediction_scan,
    run_priors_scan,
    run_seed_scan,
)
from .synth import CapacityError, DeviceTemplate, SyntheticSpec, generate, generate_with_assignments

__version__ = "0.1.0"
