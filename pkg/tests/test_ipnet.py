import random

import pytest

from portent.ipnet import Subnet, ip_from_text, ip_to_text


def test_dotted_quad_round_trip():
    for text in ("0.0.0.0", "1.2.3.4", "10.255.0.1", "255.255.255.255"):
        assert ip_to_text(ip_from_text(text)) == text


def test_round_trip_random_values():
    rng = random.Random(1)
    for _ in range(200):
        ip = rng.getrandbits(32)
        assert ip_from_text(ip_to_text(ip)) == ip


def test_bad_dotted_quad_rejected():
    with pytest.raises(ValueError):
        ip_from_text("300.1.1.1")
    with pytest.raises(ValueError):
        ip_from_text("1.2.3")


def test_subnet_base_must_have_host_bits_zero():
    with pytest.raises(ValueError):
        Subnet(ip_from_text("1.2.3.4"), 16)
    Subnet(ip_from_text("1.2.0.0"), 16)  # fine


def test_subnet_of_masks_and_contains():
    rng = random.Random(2)
    for _ in range(300):
        ip = rng.getrandbits(32)
        plen = rng.randint(0, 32)
        net = Subnet.of(ip, plen)
        # independent mask computation
        expected_base = (ip >> (32 - plen) << (32 - plen)) if plen else 0
        assert net.base == expected_base
        assert net.contains(ip)
        assert net.base & ((1 << (32 - plen)) - 1) == 0 if plen < 32 else True


def test_contains_matches_prefix_bits():
    net = Subnet.parse("10.1.0.0/16")
    assert net.contains(ip_from_text("10.1.2.3"))
    assert not net.contains(ip_from_text("10.2.2.3"))
    assert Subnet.parse("0.0.0.0/0").contains(ip_from_text("200.0.0.1"))


def test_parse_rejects_host_bits():
    with pytest.raises(ValueError):
        Subnet.parse("10.1.2.3/16")


def test_size_and_str():
    assert Subnet.parse("10.1.0.0/16").size == 65536
    assert Subnet.parse("0.0.0.0/0").size == 2**32
    assert str(Subnet.parse("10.1.0.0/16")) == "10.1.0.0/16"
    assert Subnet.parse(str(Subnet.of(ip_from_text("1.2.3.4"), 20))) == Subnet.of(ip_from_text("1.2.3.4"), 20)


def test_overlap_size():
    big = Subnet.parse("10.0.0.0/8")
    small = Subnet.parse("10.1.0.0/16")
    other = Subnet.parse("11.0.0.0/8")
    assert big.overlap_size(small) == 65536
    assert small.overlap_size(big) == 65536
    assert big.overlap_size(other) == 0
    assert big.overlap_size(big) == big.size
