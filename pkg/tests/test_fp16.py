"""Round-to-nearest-even binary16 rounding against an exhaustive table oracle."""

import math
import struct

import numpy as np
import pytest

from bflylab.butterfly import quantize_fp16
from bflylab.errors import NumericDomainError

MAX_FINITE = 65504.0
OVERFLOW_BOUNDARY = 65520.0  # halfway to the would-be next value; RTNE rounds to inf


def _decode_bits(bits: int) -> float:
    return struct.unpack("<e", struct.pack("<H", bits))[0]


def _binary16_table():
    """All finite binary16 values with the parity of their significand LSB."""
    values = []
    for bits in range(1 << 16):
        if (bits >> 10) & 0x1F == 0x1F:
            continue  # inf/nan encodings
        values.append((_decode_bits(bits), bits & 1))
    values.sort(key=lambda t: t[0])
    return values


TABLE = _binary16_table()
VALS = np.array([v for v, _ in TABLE])
PARITY = np.array([p for _, p in TABLE])


def oracle_round(x: float) -> float:
    if x > MAX_FINITE:
        return math.inf if x >= OVERFLOW_BOUNDARY else MAX_FINITE
    if x < -MAX_FINITE:
        return -math.inf if x <= -OVERFLOW_BOUNDARY else -MAX_FINITE
    i = np.searchsorted(VALS, x)
    lo = max(i - 1, 0)
    hi = min(i, len(VALS) - 1)
    dlo, dhi = abs(x - VALS[lo]), abs(VALS[hi] - x)
    if dlo < dhi:
        return float(VALS[lo])
    if dhi < dlo:
        return float(VALS[hi])
    return float(VALS[lo] if PARITY[lo] == 0 else VALS[hi])  # tie: even significand


def test_exactly_representable():
    assert quantize_fp16(1.0) == 1.0


def test_eleven_bit_significand_rounds_down():
    assert quantize_fp16(2049.0) == 2048.0  # 2^11 + 1 is not representable


def test_last_ulp_near_one():
    x = 1.0009765625  # 1 + 2^-10
    assert quantize_fp16(x) == x


def test_overflow_flagged_as_inf():
    assert quantize_fp16(70000.0) == math.inf
    assert quantize_fp16(-70000.0) == -math.inf
    assert quantize_fp16(MAX_FINITE) == MAX_FINITE


def test_rejects_non_finite():
    with pytest.raises(NumericDomainError):
        quantize_fp16(math.nan)
    with pytest.raises(NumericDomainError):
        quantize_fp16(math.inf)


def test_table_values_are_fixed_points():
    # every finite binary16 value round-trips exactly (subsample for speed)
    for v in VALS[:: 97]:
        assert quantize_fp16(float(v)) == float(v)


def test_random_values_match_table_oracle():
    rng = np.random.default_rng(0)
    xs = np.concatenate([
        rng.normal(0, 1, 500),
        rng.normal(0, 1000, 500),
        rng.uniform(-7e4, 7e4, 500),
        rng.uniform(-1e-4, 1e-4, 500),  # subnormal territory
    ])
    for x in xs:
        assert quantize_fp16(float(x)) == oracle_round(float(x)), x


def test_ties_round_to_even():
    # midpoints between adjacent representables must land on even significands
    rng = np.random.default_rng(1)
    idx = rng.integers(0, len(VALS) - 1, size=400)
    for i in idx:
        a, b = float(VALS[i]), float(VALS[i + 1])
        mid = (a + b) / 2.0
        if mid in (a, b):  # midpoint not exactly representable in float64
            continue
        got = quantize_fp16(mid)
        assert got == oracle_round(mid)
        # and the chosen neighbour has an even significand LSB
        chosen = i if got == a else i + 1
        assert PARITY[chosen] == 0
