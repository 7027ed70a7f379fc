import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepconv.errors import ValidationError
from deepconv.seqconv import (
    ConvMatrix,
    FilterSeq,
    apply_conv,
    convolve_seq,
    downsample,
    materialize,
)

import oracles


def seq(values):
    return FilterSeq(values)


# ---------------------------------------------------------------- FilterSeq


def test_filterseq_rejects_empty():
    with pytest.raises(ValidationError):
        FilterSeq([])


def test_filterseq_rejects_non_finite():
    with pytest.raises(ValidationError):
        FilterSeq([1.0, float("nan")])


def test_filterseq_is_immutable():
    f = seq([1.0, 2.0])
    with pytest.raises(ValueError):
        f.coeffs[0] = 3.0


def test_filterseq_degree_counts_trailing_zeros():
    assert seq([1.0, 0.0, 0.0]).degree == 2


# ------------------------------------------------------------- convolve_seq


def test_convolve_delta_identity():
    assert convolve_seq([1], [3, 4]) == seq([3.0, 4.0])


def test_convolve_alternating_example():
    assert convolve_seq([1, -1, 1], [1, 1, 1]) == seq([1.0, 0.0, 1.0, 0.0, 1.0])


def test_convolve_zero_filter_annihilates():
    assert convolve_seq([0, 0], [5, 6, 7]) == seq([0.0, 0.0, 0.0, 0.0])


# --------------------------------------------------------------- apply_conv


def test_apply_conv_example():
    np.testing.assert_array_equal(apply_conv([1, 2], [3, 4]), [3.0, 10.0, 8.0])


def test_apply_conv_identity_filter():
    x = np.array([2.0, -1.0, 0.5])
    np.testing.assert_array_equal(apply_conv([1], x), x)


def test_apply_conv_shift_filter():
    np.testing.assert_array_equal(apply_conv([0, 1], [1, 0, 0]), [0.0, 1.0, 0.0, 0.0])


def test_apply_conv_rejects_empty_vector():
    with pytest.raises(ValidationError):
        apply_conv([1], [])


# -------------------------------------------------------------- materialize


def test_materialize_example():
    np.testing.assert_array_equal(
        materialize([1, 2], 2), [[1.0, 0.0], [2.0, 1.0], [0.0, 2.0]]
    )


def test_materialize_identity():
    np.testing.assert_array_equal(materialize([1], 3), np.eye(3))


def test_materialize_single_column():
    np.testing.assert_array_equal(
        materialize([2.0, -3.0, 0.5], 1), [[2.0], [-3.0], [0.5]]
    )


def test_conv_matrix_entries_and_shape():
    T = ConvMatrix(seq([1.0, 2.0, 3.0]), in_dim=4)
    assert T.out_dim == 6
    dense = T.dense()
    for i in range(6):
        for k in range(4):
            assert dense[i, k] == T.entry(i, k)


def test_conv_matrix_matmul_matches_apply():
    T = ConvMatrix(seq([1.0, -2.0]), in_dim=3)
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(T @ x, T.dense() @ x, atol=1e-12)


# --------------------------------------------------------------- downsample


def test_downsample_even_length():
    np.testing.assert_array_equal(downsample([1, 2, 3, 4, 5, 6], 2), [2.0, 4.0, 6.0])


def test_downsample_scale_one_is_identity():
    v = [3.0, 1.0, 4.0]
    np.testing.assert_array_equal(downsample(v, 1), v)


def test_downsample_odd_length():
    np.testing.assert_array_equal(downsample([1, 2, 3, 4, 5], 2), [2.0, 4.0])


def test_downsample_too_large_scale_errors():
    with pytest.raises(ValidationError, match="empty downsample"):
        downsample([1.0, 2.0], 3)


def test_downsample_rejects_nonpositive_scale():
    with pytest.raises(ValidationError):
        downsample([1.0, 2.0], 0)


# ------------------------------------------------- agreement with the oracle

finite_floats = st.floats(min_value=-10, max_value=10, allow_nan=False)
short_filter = st.lists(finite_floats, min_size=1, max_size=6)


@given(short_filter, short_filter)
def test_convolve_matches_direct_summation(w, v):
    got = convolve_seq(w, v).coeffs
    np.testing.assert_allclose(got, oracles.conv_direct(w, v), atol=1e-12)


@given(short_filter, st.integers(min_value=1, max_value=8))
def test_materialize_matches_direct_transcription(w, in_dim):
    np.testing.assert_array_equal(materialize(w, in_dim), oracles.toeplitz_direct(w, in_dim))


@given(
    st.lists(finite_floats, min_size=1, max_size=12),
    st.integers(min_value=1, max_value=12),
)
def test_downsample_matches_direct(v, m):
    if m > len(v):
        with pytest.raises(ValidationError):
            downsample(v, m)
    else:
        np.testing.assert_array_equal(downsample(v, m), oracles.downsample_direct(v, m))


# ----------------------------------------------------- structural invariants


@given(short_filter, short_filter, st.integers(min_value=1, max_value=8))
@settings(max_examples=150)
def test_toeplitz_product_identity_real(w, v, in_dim):
    lhs = materialize(convolve_seq(w, v), in_dim)
    rhs = materialize(w, in_dim + len(v) - 1) @ materialize(v, in_dim)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@given(
    st.lists(st.integers(min_value=-5, max_value=5), min_size=1, max_size=5),
    st.lists(st.integers(min_value=-5, max_value=5), min_size=1, max_size=5),
    st.integers(min_value=1, max_value=8),
)
def test_toeplitz_product_identity_integer_exact(w, v, in_dim):
    lhs = materialize(convolve_seq(w, v), in_dim)
    rhs = materialize(w, in_dim + len(v) - 1) @ materialize(v, in_dim)
    assert np.array_equal(lhs, rhs)


@given(short_filter, st.lists(finite_floats, min_size=1, max_size=8))
def test_apply_conv_agrees_with_materialized_product(w, x):
    np.testing.assert_allclose(
        apply_conv(w, x), materialize(w, len(x)) @ np.asarray(x), atol=1e-12
    )


@given(short_filter, st.lists(finite_floats, min_size=1, max_size=8))
def test_row_sum_bound(w, v):
    out = apply_conv(w, v)
    bound = np.sum(np.abs(w)) * np.max(np.abs(v))
    assert np.max(np.abs(out)) <= bound + 1e-12


@given(short_filter, short_filter)
def test_convolution_commutes(w, v):
    np.testing.assert_allclose(
        convolve_seq(w, v).coeffs, convolve_seq(v, w).coeffs, atol=1e-12
    )


@given(short_filter, short_filter, short_filter)
def test_convolution_associates(w, v, u):
    left = convolve_seq(convolve_seq(w, v), u).coeffs
    right = convolve_seq(w, convolve_seq(v, u)).coeffs
    np.testing.assert_allclose(left, right, atol=1e-12)
