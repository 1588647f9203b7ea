"""The conditional-probability model, on a seed small enough to count by hand.

Three hosts: two identical devices that open ports 22 and 80 and share an
SSH banner, and one lone SSH host with a different banner. The model
tracks four shapes of evidence for every (evidence port, target port)
pair: the port alone, the port plus an application value, the port plus
the host's network, and all three together.
"""

from portent import Condition, FeatureKind, FeatureValue, best_condition_for, build
from portent.corpus import make_record
from portent.ipnet import ip_from_text

seed = []
for text, banner, ports in (("10.1.0.1", "SSH-2.0-camX", (22, 80)),
                            ("10.1.0.2", "SSH-2.0-camX", (22, 80)),
                            ("10.2.0.3", "SSH-2.0-other", (22,))):
    ip = ip_from_text(text)
    seed.append(make_record(ip, 22, "ssh", {FeatureKind.SSH_BANNER: banner}))
    for port in ports[1:]:
        seed.append(make_record(ip, port, "http"))

model = build(seed, min_support=1)
print(f"model holds {len(model)} (condition, target) entries\n")

banner = FeatureValue(FeatureKind.SSH_BANNER, "SSH-2.0-camX")
subnet = FeatureValue(FeatureKind.SUBNET_16, "10.1.0.0/16")
cases = [
    ("port only        P(80 | 22)", Condition(22)),
    ("port + app       P(80 | 22, banner=camX)", Condition(22, app=banner)),
    ("port + network   P(80 | 22, net=10.1/16)", Condition(22, net=subnet)),
    ("all three        P(80 | 22, banner, net)", Condition(22, app=banner, net=subnet)),
]
for label, cond in cases:
    p = model.probability(cond, 80)
    joint, ch = model.entry(cond, 80)
    print(f"{label:45s} = {joint}/{ch} = {p:.3f}")

print("\nwhy the difference matters: the port-only evidence is diluted by")
print("the lone host, while the banner pins down the device type exactly.")

host = [make_record(ip_from_text("10.1.0.200"), 22, "ssh",
                    {FeatureKind.SSH_BANNER: "SSH-2.0-camX"})]
cond, p = best_condition_for(model, host, 80)
print(f"\nbest evidence to predict port 80 on a new banner-matching host:")
print(f"  {cond.class_name}: port_b={cond.port_b}, app={cond.app}, "
      f"net={cond.net}  ->  P = {p:.3f}")
