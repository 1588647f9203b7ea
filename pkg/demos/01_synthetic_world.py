"""Build a small synthetic address space and clean it up.

Three host populations live in the world: template devices with
manufactured port sets and shared banners, wildcard "pseudo service"
hosts that answer identically on over a thousand contiguous ports, and
noise hosts with unpredictable ports. The pseudo-service filter has to
remove the wildcard hosts without touching the real ones.
"""

from portent import FeatureKind, Subnet, filter_pseudo_services
from portent.synth import DeviceTemplate, SyntheticSpec, generate_with_assignments

spec = SyntheticSpec(
    universe=Subnet.parse("10.0.0.0/12"),
    templates=(
        DeviceTemplate(
            id="cam",
            port_set=frozenset({80, 8000}),
            population=400,
            protocols={80: "http", 8000: "http"},
            port_features={80: {FeatureKind.HTTP_HTML_TITLE: "NetCam viewer"},
                           8000: {FeatureKind.HTTP_BODY_HASH: "cam-stream-ui"}},
            subnet_clustering=((Subnet.parse("10.3.0.0/16"), 1.0),),
        ),
        DeviceTemplate(
            id="gateway",
            port_set=frozenset({22, 7547}),
            population=300,
            protocols={22: "ssh", 7547: "cwmp"},
            shared_features={FeatureKind.SSH_BANNER: "SSH-2.0-gw_1.9"},
            port_features={7547: {FeatureKind.CWMP_HEADER: "tr069-build-7"}},
            optional_ports={8080: 0.5},
        ),
    ),
    pseudo_host_count=3,
    pseudo_port_span=1300,
    noise_host_count=120,
    rng_seed=2024,
)

corpus, assignments = generate_with_assignments(spec)
print(f"generated {len(corpus):,} services on {len(corpus.responsive_ips()):,} hosts")
for group, ips in sorted(assignments.items()):
    services = sum(len(corpus.services_on_ip(ip)) for ip in ips)
    print(f"  {group:8s} {len(ips):4d} hosts, {services:6,} services")

print("\none cam host, as a scanner would see it:")
cam_ip = assignments["cam"][0]
for rec in corpus.services_on_ip(cam_ip):
    feats = {k.value: v for k, v in rec.app_features.items()}
    print(f"  port {rec.port:5d} {rec.protocol:5s} {feats}")

print("\napplying the pseudo-service filter (dynamic fields stripped, "
      "identical content collapsed, hosts with >10 services dropped):")
filtered = filter_pseudo_services(corpus)
removed = len(corpus) - len(filtered)
pseudo_total = sum(len(corpus.services_on_ip(ip)) for ip in assignments["pseudo"])
print(f"  removed {removed:,} services ({pseudo_total:,} of them belonged "
      f"to the 3 wildcard hosts)")
survivors = {r.ip for r in filtered}
print(f"  wildcard hosts left responsive: "
      f"{sum(1 for ip in assignments['pseudo'] if ip in survivors)}")
print(f"  cam hosts left responsive:      "
      f"{sum(1 for ip in assignments['cam'] if ip in survivors)} of "
      f"{len(assignments['cam'])}")
