import numpy as np
import pytest

from onebitfl.core import ConfigError, rng_from
from onebitfl.quantizer import (BitVector, QuantParams, clamp_update, compress,
                                compress_signs, dynamic_b_update, expected_value,
                                plus_probability, uniform_params)


# ---------------------------------------------------------------- QuantParams

def test_quant_params_require_positive_b():
    with pytest.raises(ConfigError):
        QuantParams(b=np.array([0.01, 0.0]), dp_margin=0.0)
    with pytest.raises(ConfigError):
        QuantParams(b=np.array([0.01]), dp_margin=-1e-9)


def test_uniform_params_broadcast():
    q = uniform_params(0.01, 5)
    np.testing.assert_array_equal(q.b, np.full(5, 0.01))
    assert q.dp_margin == 0.0


# --------------------------------------------------------------------- clamp

def test_clamp_outside_range():
    q = uniform_params(0.01, 1)
    np.testing.assert_array_equal(clamp_update(np.array([0.5]), q), [0.01])
    np.testing.assert_array_equal(clamp_update(np.array([-0.5]), q), [-0.01])


def test_clamp_inside_range_unchanged():
    q = uniform_params(0.01, 1)
    np.testing.assert_array_equal(clamp_update(np.array([0.005]), q), [0.005])


def test_clamp_with_privacy_margin():
    # range 0.0072 with margin (1 + 1/0.1) * 0.0002 = 0.0022 admits only 0.005
    q = QuantParams(b=np.array([0.0072]), dp_margin=0.0022)
    np.testing.assert_allclose(clamp_update(np.array([0.009]), q), [0.005])


def test_clamp_margin_consuming_whole_range_is_config_error():
    q = QuantParams(b=np.array([0.002]), dp_margin=0.002)
    with pytest.raises(ConfigError):
        clamp_update(np.array([0.001]), q)


# ------------------------------------------------------------------ compress

def test_plus_probability_points():
    b = np.array([0.01])
    assert plus_probability(np.array([0.01]), b)[0] == 1.0
    assert plus_probability(np.array([0.0]), b)[0] == 0.5
    assert plus_probability(np.array([0.005]), b)[0] == 0.75


def test_compress_boundary_is_deterministic():
    q = uniform_params(0.01, 4)
    rng = rng_from(0)
    for _ in range(20):
        bits = compress(np.array([0.01, -0.01, 0.01, -0.01]), q, rng)
        np.testing.assert_array_equal(bits.signs(), [1, -1, 1, -1])


def test_compress_rejects_out_of_range():
    q = uniform_params(0.01, 1)
    with pytest.raises(ValueError):
        compress(np.array([0.02]), q, rng_from(0))


def test_compress_is_pure_given_rng_state():
    q = uniform_params(0.01, 64)
    delta = rng_from(1).uniform(-0.01, 0.01, size=64)
    a = compress(delta, q, rng_from(2)).signs()
    b = compress(delta, q, rng_from(2)).signs()
    np.testing.assert_array_equal(a, b)


def test_compress_frequency_grid():
    # empirical P(+1) within 4 SE of (b+delta)/(2b) on the ratio grid
    b_i = 0.01
    n = 100_000
    rng = rng_from(11)
    for ratio in (-1.0, -0.5, 0.0, 0.5, 1.0):
        delta = np.full(n, ratio * b_i)
        signs = compress_signs(delta, np.full(n, b_i), rng)
        p = (1.0 + ratio) / 2.0
        phat = (signs > 0).mean()
        se = max(np.sqrt(p * (1 - p) / n), 1e-12)
        assert abs(phat - p) <= 4 * se, f"ratio {ratio}: {phat} vs {p}"


def test_single_coordinate_unbiasedness_monte_carlo():
    b_i = 0.01
    delta_i = 0.003
    n = 200_000
    signs = compress_signs(np.full(n, delta_i), np.full(n, b_i), rng_from(12))
    vals = signs * b_i
    se = vals.std(ddof=1) / np.sqrt(n)
    assert abs(vals.mean() - delta_i) <= 4 * se


# ----------------------------------------------------------------- dynamic b

def test_dynamic_b_grow_and_shrink():
    q = uniform_params(0.01, 3)
    np.testing.assert_allclose(dynamic_b_update(q, True).b, 0.0101)
    np.testing.assert_allclose(dynamic_b_update(q, False).b, 0.0098)


def test_dynamic_b_composition():
    q = uniform_params(0.01, 1)
    q = dynamic_b_update(dynamic_b_update(q, True), False)
    np.testing.assert_allclose(q.b, 0.0098980, rtol=1e-12)


def test_dynamic_b_preserves_margin_and_checks_floor():
    q = QuantParams(b=np.array([0.0072]), dp_margin=0.0022)
    assert dynamic_b_update(q, True).dp_margin == 0.0022
    tight = QuantParams(b=np.array([0.002243]), dp_margin=0.0022)
    with pytest.raises(ConfigError):
        dynamic_b_update(tight, False)  # 0.98 * b dips under the margin


# ------------------------------------------------------------ expected value

def test_expected_value_identity():
    assert expected_value(0.0, 0.01) == 0.0
    assert expected_value(0.01, 0.01) == pytest.approx(0.01)
    assert expected_value(0.003, 0.01) == pytest.approx(0.003)


# --------------------------------------------------------------- wire format

def test_bitvector_roundtrip_odd_dims():
    rng = rng_from(13)
    for d in (1, 3, 7, 8, 9, 15, 16, 33):
        signs = np.where(rng.random(d) < 0.5, 1, -1).astype(np.int8)
        bv = BitVector.from_signs(signs)
        np.testing.assert_array_equal(bv.signs(), signs)
        again = BitVector.from_bytes(bv.to_bytes())
        assert again.d == d
        np.testing.assert_array_equal(again.signs(), signs)


def test_bitvector_wire_layout():
    # header: little-endian uint32 d; then coordinate i at byte i//8, bit i%8,
    # +1 encoded as bit value 1
    bv = BitVector.from_signs(np.array([1, -1, -1, -1, -1, -1, -1, -1, 1], dtype=np.int8))
    raw = bv.to_bytes()
    assert raw[:4] == (9).to_bytes(4, "little")
    assert raw[4:] == bytes([0b00000001, 0b00000001])


def test_bitvector_rejects_non_pm_one():
    with pytest.raises(ValueError):
        BitVector.from_signs(np.array([1, 0, -1], dtype=np.int8))


def test_bitvector_from_bytes_validates_length():
    good = BitVector.from_signs(np.ones(9, dtype=np.int8)).to_bytes()
    with pytest.raises(ValueError):
        BitVector.from_bytes(good[:-1])
