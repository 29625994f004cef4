import numpy as np
import pytest

from coaldecomp.rings import (
    DkRejection,
    HadamardMatrix,
    RingMismatchError,
    Scalar,
    check_dk_membership,
    ring_add,
    ring_mul,
)

EPS = np.finfo(float).eps


def test_scalar_ops():
    assert ring_add(Scalar(2), Scalar(3)) == Scalar(5)
    assert ring_mul(Scalar(2), Scalar(3)) == Scalar(6)


def test_matrix_ops():
    m = HadamardMatrix.from_matrix([[1, 2], [2, 3]])
    assert m + HadamardMatrix.zero(2) == m
    assert m * HadamardMatrix.one(2) == m
    s = HadamardMatrix.from_matrix([[1, 0], [0, 1]]) + HadamardMatrix.from_matrix([[1, 2], [2, 1]])
    np.testing.assert_array_equal(s.matrix, [[2, 2], [2, 2]])
    p = m * HadamardMatrix.from_matrix([[4, 0], [0, 4]])
    np.testing.assert_array_equal(p.matrix, [[4, 0], [0, 12]])


def test_matrix_is_symmetric_by_storage():
    m = HadamardMatrix.from_matrix([[1, 2, 3], [2, 4, 5], [3, 5, 6]])
    assert m.upper.shape == (6,)
    np.testing.assert_array_equal(m.matrix, m.matrix.T)
    with pytest.raises(ValueError):
        HadamardMatrix.from_matrix([[1, 2], [0, 1]])


def test_mismatch():
    with pytest.raises(RingMismatchError):
        ring_add(Scalar(1), HadamardMatrix.zero(2))
    with pytest.raises(RingMismatchError):
        ring_mul(HadamardMatrix.zero(2), HadamardMatrix.zero(3))


def _random_values(rng, variant):
    if variant == "scalar":
        return [Scalar(float(v)) for v in rng.normal(size=3)]
    out = []
    for _ in range(3):
        a = rng.normal(size=(3, 3))
        out.append(HadamardMatrix.from_matrix(a + a.T))
    return out


def _arr(v):
    return np.atleast_1d(v.value if isinstance(v, Scalar) else v.upper)


@pytest.mark.parametrize("variant", ["scalar", "matrix"])
def test_ring_axioms(variant):
    rng = np.random.default_rng(11)
    zero = Scalar.zero() if variant == "scalar" else HadamardMatrix.zero(3)
    one = Scalar.one() if variant == "scalar" else HadamardMatrix.one(3)
    for _ in range(1000):
        a, b, c = _random_values(rng, variant)
        scale_add = np.abs(_arr(a)) + np.abs(_arr(b)) + np.abs(_arr(c))
        scale_mul = np.abs(_arr(a)) * np.abs(_arr(b)) * np.abs(_arr(c))
        np.testing.assert_array_less(np.abs(_arr((a + b) + c) - _arr(a + (b + c))), 8 * EPS * scale_add + 1e-300)
        np.testing.assert_array_less(np.abs(_arr((a * b) * c) - _arr(a * (b * c))), 8 * EPS * scale_mul + 1e-300)
        assert a + b == b + a
        assert a * b == b * a
        dist = np.abs(_arr(a * (b + c)) - _arr(a * b + a * c))
        np.testing.assert_array_less(dist, 8 * EPS * np.abs(_arr(a)) * (np.abs(_arr(b)) + np.abs(_arr(c))) + 1e-300)
        assert a + zero == a
        assert a * one == a
        assert a + (-a) == zero


class TestDkMembership:
    def test_identity(self):
        assert check_dk_membership(np.eye(2)).diag_sign == 1

    def test_negative_semidefinite(self):
        assert check_dk_membership(-np.array([[2.0, 1.0], [1.0, 2.0]])).diag_sign == -1

    def test_mixed_signs(self):
        with pytest.raises(DkRejection) as err:
            check_dk_membership([[1.0, 0.0], [0.0, -1.0]])
        assert err.value.condition == "mixed-diagonal-signs"

    def test_zero_diagonal(self):
        with pytest.raises(DkRejection) as err:
            check_dk_membership([[0.0, 0.0], [0.0, 1.0]])
        assert err.value.condition == "zero-diagonal"

    def test_indefinite(self):
        with pytest.raises(DkRejection) as err:
            check_dk_membership([[1.0, 2.0], [2.0, 1.0]])
        assert err.value.condition == "indefinite"

    def test_tolerates_rounding(self):
        m = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-12]])
        assert check_dk_membership(m).diag_sign == 1
