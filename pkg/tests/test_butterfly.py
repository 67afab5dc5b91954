import json

import numpy as np
import pytest

from bflylab.butterfly import (
    BuMode,
    ButterflyMatrix,
    ButterflyStage,
    OpCounter,
    apply_butterfly,
    bu_step,
    butterfly_from_json,
    butterfly_to_json,
    expand_dense,
    fft_as_butterfly,
    identity_butterfly,
    pair_low_indices,
    random_butterfly,
)
from bflylab.errors import ConfigError, NumericDomainError, ShapeError


def test_bu_step_identity_coefficients():
    assert bu_step(BuMode.BUTTERFLY_LINEAR, 1.0, 2.0, (1, 0, 0, 1)) == (1.0, 2.0)


def test_bu_step_fft_dc_pair():
    o1, o2 = bu_step(BuMode.FFT, 1 + 0j, 1 + 0j, 1 + 0j)
    assert o1 == 2 + 0j and o2 == 0 + 0j


def test_bu_step_matches_dense_2x2():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x1, x2 = rng.normal(size=2)
        w = rng.normal(size=4)
        o1, o2 = bu_step(BuMode.BUTTERFLY_LINEAR, x1, x2, w)
        ref = np.array([[w[0], w[2]], [w[1], w[3]]]) @ np.array([x1, x2])
        assert abs(o1 - ref[0]) < 1e-12 and abs(o2 - ref[1]) < 1e-12


def test_bu_step_rejects_non_finite():
    with pytest.raises(NumericDomainError):
        bu_step(BuMode.BUTTERFLY_LINEAR, np.nan, 1.0, (1, 0, 0, 1))
    with pytest.raises(NumericDomainError):
        bu_step(BuMode.FFT, 1 + 0j, complex(np.inf, 0), 1 + 0j)


def test_expand_dense_single_pair_layout():
    # one 2x2 stage (a,b,c,d) expands to [[a, c], [b, d]] per bu_step semantics
    a, b, c, d = 2.0, 3.0, 5.0, 7.0
    m = ButterflyMatrix(2, (ButterflyStage(0, np.array([[a, b, c, d]])),))
    np.testing.assert_allclose(expand_dense(m), [[a, c], [b, d]])


def test_expand_dense_identity():
    np.testing.assert_allclose(expand_dense(identity_butterfly(16)), np.eye(16))


def test_expand_matches_apply_n8():
    rng = np.random.default_rng(1)
    m = random_butterfly(8, rng)
    dense = expand_dense(m)
    for _ in range(100):
        x = rng.normal(size=8)
        np.testing.assert_allclose(apply_butterfly(m, x), dense @ x, atol=1e-10)


def test_apply_identity_matrix_is_identity():
    rng = np.random.default_rng(2)
    x = rng.normal(size=32)
    np.testing.assert_allclose(apply_butterfly(identity_butterfly(32), x), x)


def test_apply_dft_twiddles_constant_input():
    # DFT of a constant vector concentrates everything in bin zero
    m = fft_as_butterfly(4)
    y = apply_butterfly(m, np.ones(4, dtype=complex))
    from bflylab.butterfly import bit_reverse_permutation

    y = y[bit_reverse_permutation(4)]
    np.testing.assert_allclose(y.real, [4, 0, 0, 0], atol=1e-12)


def test_apply_matches_dense_n64():
    rng = np.random.default_rng(3)
    m = random_butterfly(64, rng)
    dense = expand_dense(m)
    x = rng.normal(size=64)
    err = np.max(np.abs(apply_butterfly(m, x) - dense @ x))
    assert err < 1e-9


def test_apply_rejects_length_mismatch():
    with pytest.raises(ShapeError):
        apply_butterfly(identity_butterfly(8), np.zeros(9))


def test_stage_convention_first_stage_pairs_at_half():
    m = random_butterfly(16, np.random.default_rng(0))
    assert m.stride_of(0) == 8
    assert m.stride_of(m.levels - 1) == 1
    lo = pair_low_indices(16, 8)
    np.testing.assert_array_equal(lo, np.arange(8))


def test_param_count():
    rng = np.random.default_rng(4)
    for n in (4, 16, 128):
        m = random_butterfly(n, rng)
        assert m.n_params == 2 * n * m.levels


def test_single_stage_nonzero_count():
    rng = np.random.default_rng(5)
    n = 32
    m = random_butterfly(n, rng)
    from bflylab.butterfly import _stage_to_sparse

    for stage in m.stages:
        sp = _stage_to_sparse(m, stage)
        assert sp.nnz == 2 * n
        assert np.all(np.diff(sp.indptr) == 2)  # 2 nonzeros per row
        assert np.all(np.bincount(sp.indices, minlength=n) == 2)  # and per column


def test_counter_multiplies():
    rng = np.random.default_rng(6)
    n = 64
    m = random_butterfly(n, rng)
    c = OpCounter()
    apply_butterfly(m, rng.normal(size=n), counter=c)
    assert c.bu_calls == (n // 2) * m.levels
    assert c.mul == 4 * (n // 2) * m.levels


def test_counter_path_matches_vectorized():
    rng = np.random.default_rng(7)
    m = random_butterfly(16, rng)
    x = rng.normal(size=16)
    fast = apply_butterfly(m, x)
    slow = apply_butterfly(m, x, counter=OpCounter())
    np.testing.assert_array_equal(fast, slow)  # bit-identical paths


def test_matrix_validation():
    with pytest.raises(ConfigError):
        ButterflyMatrix(6, ())
    with pytest.raises(ConfigError):
        ButterflyMatrix(4, (ButterflyStage(0, np.zeros((2, 4))),))  # missing stage


def test_json_round_trip_and_field_names():
    rng = np.random.default_rng(8)
    m = random_butterfly(8, rng)
    obj = butterfly_to_json(m)
    assert set(obj) == {"size", "stages"}
    assert set(obj["stages"][0]) == {"level", "pairs"}
    assert len(obj["stages"][0]["pairs"][0]) == 4
    m2 = butterfly_from_json(json.loads(json.dumps(obj)))
    for s1, s2 in zip(m.stages, m2.stages):
        np.testing.assert_allclose(s1.coeffs, s2.coeffs)


def test_fft_matrix_rejects_json():
    with pytest.raises(ConfigError):
        butterfly_to_json(fft_as_butterfly(8))
