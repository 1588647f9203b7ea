"""Shared builders for randomized test corpora.

Oracle implementations live next to the tests that use them; this module
only constructs input data.
"""

from __future__ import annotations

import random

import pytest

from portent.corpus import Corpus, ServiceRecord, make_record
from portent.features import FeatureKind
from portent.ipnet import Subnet

PORT_POOL = [21, 22, 23, 25, 80, 443, 2222, 3306, 7547, 8080, 8443, 9000]
BANNER_POOL = ["alpha", "beta", "gamma", "delta"]
PROTOCOLS = {21: "ftp", 22: "ssh", 23: "telnet", 25: "smtp", 80: "http",
             443: "https", 2222: "ssh", 3306: "mysql", 7547: "cwmp",
             8080: "http", 8443: "https", 9000: "http"}
BANNER_KIND = {"ftp": FeatureKind.FTP_BANNER, "ssh": FeatureKind.SSH_BANNER,
               "telnet": FeatureKind.TELNET_BANNER, "smtp": FeatureKind.SMTP_BANNER,
               "http": FeatureKind.HTTP_SERVER, "https": FeatureKind.HTTP_SERVER,
               "mysql": FeatureKind.MYSQL_SERVER_VERSION, "cwmp": FeatureKind.CWMP_HEADER}


def random_services(rng: random.Random, n_hosts: int,
                    universe: Subnet = Subnet.parse("10.0.0.0/14"),
                    max_ports: int = 4,
                    with_features: bool = True) -> list[ServiceRecord]:
    """Hosts with 1..max_ports ports from a small pool, small value pools,
    so conditions repeat across hosts."""
    ips = rng.sample(range(universe.base, universe.base + universe.size), n_hosts)
    records = []
    for ip in ips:
        ports = rng.sample(PORT_POOL, rng.randint(1, max_ports))
        for port in ports:
            proto = PROTOCOLS[port]
            feats = {}
            if with_features and rng.random() < 0.8:
                feats[BANNER_KIND[proto]] = rng.choice(BANNER_POOL)
            records.append(make_record(ip, port, proto, feats))
    return records


def random_corpus(rng: random.Random, n_hosts: int,
                  universe: Subnet = Subnet.parse("10.0.0.0/14"),
                  **kwargs) -> Corpus:
    return Corpus(random_services(rng, n_hosts, universe, **kwargs), universe)


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
