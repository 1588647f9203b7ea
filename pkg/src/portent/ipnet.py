"""IPv4 address and subnet arithmetic on plain 32-bit integers.

Addresses are stored as unsigned ints everywhere in the hot paths;
dotted-quad text only appears at I/O boundaries.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

FULL_MASK = 0xFFFFFFFF


def ip_from_text(text: str) -> int:
    """Parse a dotted quad into an int. Raises ValueError on bad input."""
    return int(ipaddress.IPv4Address(text.strip()))


def ip_to_text(ip: int) -> str:
    return str(ipaddress.IPv4Address(ip))


def prefix_mask(prefix_len: int) -> int:
    if prefix_len == 0:
        return 0
    return (FULL_MASK << (32 - prefix_len)) & FULL_MASK


@dataclass(frozen=True, slots=True, order=True)
class Subnet:
    """An IPv4 prefix. `base` must have all host bits zero."""

    base: int
    prefix_len: int

    def __post_init__(self) -> None:
        if not 0 <= self.prefix_len <= 32:
            raise ValueError(f"prefix length out of range: {self.prefix_len}")
        if not 0 <= self.base <= FULL_MASK:
            raise ValueError(f"base out of 32-bit range: {self.base}")
        if self.base & ~prefix_mask(self.prefix_len) & FULL_MASK:
            raise ValueError(f"host bits set in subnet base: {self}")

    @classmethod
    def parse(cls, text: str) -> "Subnet":
        net = ipaddress.IPv4Network(text.strip(), strict=True)
        return cls(int(net.network_address), net.prefixlen)

    @classmethod
    def of(cls, ip: int, prefix_len: int) -> "Subnet":
        """The prefix_len-sized subnet containing ip."""
        return cls(ip & prefix_mask(prefix_len), prefix_len)

    @property
    def size(self) -> int:
        return 1 << (32 - self.prefix_len)

    def contains(self, ip: int) -> bool:
        return (ip & prefix_mask(self.prefix_len)) == self.base

    def contains_subnet(self, other: "Subnet") -> bool:
        return other.prefix_len >= self.prefix_len and self.contains(other.base)

    def overlap_size(self, other: "Subnet") -> int:
        """Number of addresses in the intersection (prefixes nest or are disjoint)."""
        if self.contains_subnet(other):
            return other.size
        if other.contains_subnet(self):
            return self.size
        return 0

    def __str__(self) -> str:
        return f"{ip_to_text(self.base)}/{self.prefix_len}"
