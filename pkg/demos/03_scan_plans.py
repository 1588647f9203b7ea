"""From a seed sample to the two scan plans.

Phase three needs an ordered list of (port, subnet) sweeps that surfaces
the most predictive service on every host; phase four turns each
discovered service into per-(ip, port) predictions. This demo builds
both plans for a seed drawn from a three-template world and walks
through what each list says.
"""

from portent import Subnet, build, eligible_ports, split
from portent.features import FeatureKind
from portent.planner import (
    build_prediction_list,
    build_predictive_features,
    build_priors_list,
)
from portent.synth import DeviceTemplate, SyntheticSpec, generate

spec = SyntheticSpec(
    universe=Subnet.parse("10.0.0.0/12"),
    templates=(
        DeviceTemplate(id="nas", port_set=frozenset({22, 443, 5000}),
                       population=500, protocols={22: "ssh", 443: "https"},
                       shared_features={FeatureKind.SSH_BANNER: "SSH-2.0-nasbox"},
                       port_features={443: {FeatureKind.TLS_CERT_ORGANIZATION: "NAS Co"},
                                      5000: {FeatureKind.HTTP_BODY_HASH: "nas-ui"}},
                       subnet_clustering=((Subnet.parse("10.4.0.0/16"), 1.0),)),
        DeviceTemplate(id="cam", port_set=frozenset({80, 8000}),
                       population=400, protocols={80: "http", 8000: "http"},
                       port_features={80: {FeatureKind.HTTP_HTML_TITLE: "cam"},
                                      8000: {FeatureKind.HTTP_BODY_HASH: "cam-ui"}},
                       subnet_clustering=((Subnet.parse("10.5.0.0/16"), 1.0),)),
        DeviceTemplate(id="plc", port_set=frozenset({80, 102, 44818}),
                       population=300, protocols={80: "http"},
                       port_features={80: {FeatureKind.HTTP_HTML_TITLE: "PLC"},
                                      102: {FeatureKind.HTTP_BODY_HASH: "plc-102"},
                                      44818: {FeatureKind.HTTP_BODY_HASH: "plc-eip"}},
                       subnet_clustering=((Subnet.parse("10.5.0.0/16"), 1.0),)),
    ),
    rng_seed=7,
)
corpus = generate(spec)
halves = split(corpus, 0.10, rng_seed=3)
ports = eligible_ports(halves, corpus, min_ips=2)
seed = [r for ip in sorted(halves.seed_ips)
        for r in corpus.services_on_ip(ip) if r.port in ports]
print(f"seed: {len(halves.seed_ips)} hosts, {len(seed)} services, "
      f"{len(ports)} eligible ports")

model = build(seed, min_support=2)
priors = build_priors_list(seed, model, step_prefix=16)
print(f"\npriors scan list ({len(priors)} sweeps, highest coverage first):")
for entry in priors[:8]:
    print(f"  sweep port {entry.port:5d} across {entry.subnet}  "
          f"(unlocks {entry.coverage} seed services)")
print("  ...")
print("note: not every template port is swept; one good evidence port per")
print("host is enough, and the rest will be predicted from its features.")

predictive = build_predictive_features(seed, model)
print(f"\nmost-predictive-feature list: {len(predictive)} entries; strongest:")
for e in predictive[:5]:
    cond = e.condition
    print(f"  if a service matches port={cond.port_b}, app={cond.app}, "
          f"net={cond.net}: predict port {e.target_port} (P={e.probability:.2f})")

# Pretend the priors sweeps ran and we discovered one nas host's port 22.
discovered = [r for r in corpus.services if r.port == 22
              and r.ip in halves.test_ips][:1]
preds = build_prediction_list(discovered, predictive, net_kinds=model.net_kinds)
print(f"\na single discovered service on port 22 expands into "
      f"{len(preds)} follow-up probes:")
for p in preds:
    print(f"  probe port {p.port:5d} on the same host  (P={p.probability:.2f} "
          f"via {p.via.class_name})")
