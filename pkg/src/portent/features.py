"""Feature taxonomy and extraction.

Three layers of evidence are used to predict services: the transport
layer (the port itself), the application layer (banner-style values
parsed from a service response), and the network layer (the host's
subnet and ASN). Feature values are compared as exact opaque strings.
"""

from __future__ import annotations

from enum import Enum, unique
from typing import TYPE_CHECKING, Iterable, NamedTuple, Optional, Sequence

from .ipnet import Subnet, prefix_mask

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import ServiceRecord
    from .model import CoOccurrenceModel


@unique
class FeatureKind(Enum):
    """Every kind of conditioning evidence a service or host can carry.

    Definition order is the canonical extraction/tie-break order.
    """

    PROTOCOL = "protocol"
    TLS_CERT_HASH = "tls_cert_hash"
    TLS_CERT_ORGANIZATION = "tls_cert_organization"
    TLS_CERT_SUBJECT_NAME = "tls_cert_subject_name"
    HTTP_HTML_TITLE = "http_html_title"
    HTTP_BODY_HASH = "http_body_hash"
    HTTP_SERVER = "http_server"
    HTTP_HEADER = "http_header"
    SSH_HOST_KEY = "ssh_host_key"
    SSH_BANNER = "ssh_banner"
    VNC_DESKTOP_NAME = "vnc_desktop_name"
    SMTP_BANNER = "smtp_banner"
    FTP_BANNER = "ftp_banner"
    IMAP_BANNER = "imap_banner"
    POP3_BANNER = "pop3_banner"
    CWMP_HEADER = "cwmp_header"
    CWMP_BODY_HASH = "cwmp_body_hash"
    TELNET_BANNER = "telnet_banner"
    PPTP_VENDOR = "pptp_vendor"
    MYSQL_SERVER_VERSION = "mysql_server_version"
    MEMCACHED_SERVER_VERSION = "memcached_server_version"
    MSSQL_SERVER_VERSION = "mssql_server_version"
    IPMI_BANNER = "ipmi_banner"
    # Volatile response fields: carried by records, stripped by the
    # pseudo-service filter, never used as conditioning evidence.
    HTTP_DATE = "http_date"
    HTTP_COOKIE = "http_cookie"
    TLS_RANDOM = "tls_random"
    # Network-layer kinds, computed from the host address.
    SUBNET_16 = "subnet16"
    SUBNET_17 = "subnet17"
    SUBNET_18 = "subnet18"
    SUBNET_19 = "subnet19"
    SUBNET_20 = "subnet20"
    SUBNET_21 = "subnet21"
    SUBNET_22 = "subnet22"
    SUBNET_23 = "subnet23"
    ASN = "asn"

    @property
    def prefix_len(self) -> Optional[int]:
        if self.value.startswith("subnet"):
            return int(self.value[len("subnet"):])
        return None

    @property
    def is_network(self) -> bool:
        return self.value.startswith("subnet") or self is FeatureKind.ASN

    @property
    def is_application(self) -> bool:
        return not self.is_network

    @classmethod
    def subnet(cls, prefix_len: int) -> "FeatureKind":
        try:
            return cls(f"subnet{prefix_len}")
        except ValueError:
            raise ValueError(f"no subnet feature kind for /{prefix_len}") from None

    @classmethod
    def from_name(cls, name: str) -> "FeatureKind":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown feature kind: {name!r}") from None


KIND_INDEX = {kind: i for i, kind in enumerate(FeatureKind)}

# The banner-style kinds used as conditioning evidence (volatile kinds excluded).
PREDICTIVE_APP_KINDS = frozenset(
    k for k in FeatureKind
    if k.is_application and k not in (FeatureKind.HTTP_DATE, FeatureKind.HTTP_COOKIE, FeatureKind.TLS_RANDOM)
)
VOLATILE_KINDS = frozenset((FeatureKind.HTTP_DATE, FeatureKind.HTTP_COOKIE, FeatureKind.TLS_RANDOM))

NET_KIND_CANDIDATES = tuple(k for k in FeatureKind if k.is_network)
DEFAULT_NET_KINDS = frozenset((FeatureKind.SUBNET_16, FeatureKind.ASN))

# Which application-layer kinds a protocol's response can carry.
_HTTP_KINDS = frozenset((
    FeatureKind.HTTP_HTML_TITLE, FeatureKind.HTTP_BODY_HASH, FeatureKind.HTTP_SERVER,
    FeatureKind.HTTP_HEADER, FeatureKind.HTTP_DATE, FeatureKind.HTTP_COOKIE,
))
_TLS_KINDS = frozenset((
    FeatureKind.TLS_CERT_HASH, FeatureKind.TLS_CERT_ORGANIZATION,
    FeatureKind.TLS_CERT_SUBJECT_NAME, FeatureKind.TLS_RANDOM,
))
PROTOCOL_KINDS: dict[str, frozenset[FeatureKind]] = {
    "http": _HTTP_KINDS,
    "https": _HTTP_KINDS | _TLS_KINDS,
    "tls": _TLS_KINDS,
    "ssh": frozenset((FeatureKind.SSH_HOST_KEY, FeatureKind.SSH_BANNER)),
    "vnc": frozenset((FeatureKind.VNC_DESKTOP_NAME,)),
    "smtp": frozenset((FeatureKind.SMTP_BANNER,)) | _TLS_KINDS,
    "ftp": frozenset((FeatureKind.FTP_BANNER,)),
    "imap": frozenset((FeatureKind.IMAP_BANNER,)) | _TLS_KINDS,
    "pop3": frozenset((FeatureKind.POP3_BANNER,)) | _TLS_KINDS,
    "telnet": frozenset((FeatureKind.TELNET_BANNER,)),
    "cwmp": frozenset((FeatureKind.CWMP_HEADER, FeatureKind.CWMP_BODY_HASH)),
    "pptp": frozenset((FeatureKind.PPTP_VENDOR,)),
    "mysql": frozenset((FeatureKind.MYSQL_SERVER_VERSION,)),
    "memcached": frozenset((FeatureKind.MEMCACHED_SERVER_VERSION,)),
    "mssql": frozenset((FeatureKind.MSSQL_SERVER_VERSION,)),
    "ipmi": frozenset((FeatureKind.IPMI_BANNER,)),
}


def valid_kinds_for_protocol(protocol: str) -> frozenset[FeatureKind]:
    return PROTOCOL_KINDS.get(protocol, frozenset())


class FeatureValue(NamedTuple):
    kind: FeatureKind
    value: str

    def __str__(self) -> str:
        return f"{self.kind.value}={self.value}"


def extract_app_features(
    record: "ServiceRecord",
    include: frozenset[FeatureKind] = PREDICTIVE_APP_KINDS,
) -> list[FeatureValue]:
    """Protocol plus every populated application feature, in enum order."""
    out = [FeatureValue(FeatureKind.PROTOCOL, record.protocol)]
    feats = record.app_features
    if feats:
        for kind in sorted(feats, key=KIND_INDEX.__getitem__):
            if kind is not FeatureKind.PROTOCOL and kind in include:
                out.append(FeatureValue(kind, feats[kind]))
    return out


def extract_net_features(
    ip: int,
    net_kinds: Iterable[FeatureKind] = DEFAULT_NET_KINDS,
    asn_table: Optional["AsnTable"] = None,
) -> list[FeatureValue]:
    """Network features of a host address, in enum order.

    Subnet kinds mask the address; the ASN kind appears only when the
    table has a matching prefix.
    """
    out = []
    kinds = set(net_kinds)
    for kind in NET_KIND_CANDIDATES:
        if kind not in kinds:
            continue
        plen = kind.prefix_len
        if plen is not None:
            out.append(FeatureValue(kind, str(Subnet.of(ip, plen))))
        elif asn_table is not None:
            asn = asn_table.lookup(ip)
            if asn is not None:
                out.append(FeatureValue(kind, str(asn)))
    return out


class AsnTable:
    """Static prefix-to-ASN mapping with longest-prefix-match lookup."""

    def __init__(self, entries: Iterable[tuple[Subnet, int]]):
        # One dict per prefix length; lookup masks the address once per
        # populated length, longest first.
        by_len: dict[int, dict[int, int]] = {}
        n = 0
        for subnet, asn in entries:
            by_len.setdefault(subnet.prefix_len, {})[subnet.base] = asn
            n += 1
        self._by_len = sorted(by_len.items(), reverse=True)
        self._size = n

    def __len__(self) -> int:
        return self._size

    def lookup(self, ip: int) -> Optional[int]:
        for plen, table in self._by_len:
            asn = table.get(ip & prefix_mask(plen))
            if asn is not None:
                return asn
        return None

    @classmethod
    def load(cls, path) -> "AsnTable":
        """Read newline-delimited `prefix/len,asn` text."""
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    prefix, asn = line.split(",")
                    entries.append((Subnet.parse(prefix), int(asn)))
                except (ValueError, IndexError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad ASN table line {line!r}") from exc
        return cls(entries)


def rank_net_features(
    seed_services: Sequence["ServiceRecord"],
    model: "CoOccurrenceModel",
    asn_table: Optional[AsnTable] = None,
) -> list[tuple[FeatureKind, float]]:
    """Rank network kinds by how often they appear in a winning condition.

    For every seed service with at least one sibling service on its host,
    take the maximum-probability condition predicting it; services whose
    winner carries a network value are attributed to that value's kind.
    Fractions are over the attributed services and sum to 1.
    """
    from .model import best_condition_for

    if not any(k.is_network for k in model.net_kinds):
        raise ValueError("model was built without network feature candidates")

    by_host: dict[int, list] = {}
    for rec in seed_services:
        by_host.setdefault(rec.ip, []).append(rec)

    counts: dict[FeatureKind, int] = {}
    total = 0
    for ip in sorted(by_host):
        recs = by_host[ip]
        if len(recs) < 2:
            continue
        for target in recs:
            found = best_condition_for(model, recs, target.port, asn_table=asn_table)
            if found is None or found[0].net is None:
                continue
            kind = found[0].net.kind
            counts[kind] = counts.get(kind, 0) + 1
            total += 1
    if total == 0:
        return []
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], KIND_INDEX[kv[0]]))
    return [(kind, count / total) for kind, count in ranked]
