"""The four-phase pipeline against the committed reference corpus.

Seed scan, model build, priors sweeps, prediction probes, then the
evaluation: how much bandwidth did predictive scanning need compared to
exhaustively sweeping ports in their optimal order, and how close does
it sit to an oracle that never wastes a probe?
"""

from pathlib import Path

from portent.evaluation import probes_to_reach, value_at
from portent.pipeline import load_config, load_inputs, replace_config, run_pipeline

ROOT = Path(__file__).resolve().parent.parent
config = load_config(ROOT / "data" / "reference_config.json")
config = replace_config(config,
                        corpus_path=str(ROOT / "data" / "reference_corpus.ndjson.gz"),
                        asn_table_path=str(ROOT / "data" / "reference_asn.csv"))

corpus, asn_table = load_inputs(config)
print(f"reference corpus: {len(corpus):,} raw services in {config.universe}")

result = run_pipeline(corpus, config, asn_table=asn_table)
s = result.summary()
print(f"after pseudo filter: {s['corpus_services']:,} services; "
      f"{s['eligible_ports']} eligible ports; "
      f"truth (test side) = {s['truth_services']:,} services")
print(f"\nphase ledger (universe sweep = {config.universe.size:,} probes):")
for phase, row in s["ledger"]["phases"].items():
    units = row["probes"] / config.universe.size
    print(f"  {phase:12s} {row['probes']:>16,} probes ({units:10.3f} scan units) "
          f"-> {row['responses']:,} responses")

print(f"\ncoverage: {s['found_truth_fraction']:.1%} of truth services found; "
      f"prediction-probe precision {s['prediction_precision']:.1%}")

gps = result.curves_noseed
po = result.curve_port_order
target = 0.9
g, p = probes_to_reach(gps, target), probes_to_reach(po, target)
print(f"\nbandwidth to reach {target:.0%} of services (prediction phases):")
print(f"  predictive pipeline: {g:>14,} probes")
print(f"  optimal port order:  {p:>14,} probes")
print(f"  saving: {p / g:.0f}x")

print("\nselected curve points (probes -> fraction / normalized / precision):")
stride = max(1, len(gps) // 6)
for pt in list(gps[::stride]) + [gps[-1]]:
    print(f"  {pt.probes:>12,}  {pt.fraction_services:6.1%} / "
          f"{pt.normalized_services:6.1%} / {pt.precision:7.2%}  [{pt.phase}]")

oracle_at_end = value_at(result.curve_oracle, gps[-1].probes)
print(f"\noracle coverage at the same spend: {oracle_at_end:.1%} "
      f"(a perfect predictor is the unreachable ceiling)")

print("\ntop predictive feature shapes on this corpus:")
for row in result.feature_rows[:5]:
    print(f"  {row.kinds:28s} normalized {row.normalized_share:6.1%}   "
          f"services {row.service_share:6.1%}")
