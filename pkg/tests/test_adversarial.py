import math

import numpy as np
import pytest

from quant_lab.adversarial.construction import (
    bidiagonal,
    bidiagonal_inverse,
    build_instance,
    hadamard,
    scaling_report,
)
from quant_lab.quantizers.optq import optq_column
from quant_lab.utils.errors import NotPowerOfTwo


def test_hadamard_small_sizes():
    assert hadamard(1).tolist() == [[1.0]]
    assert np.allclose(hadamard(2), np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2))
    H = hadamard(8)
    assert np.allclose(H.T @ H, np.eye(8), atol=1e-12)
    assert np.allclose(np.abs(H), 1 / math.sqrt(8))


@pytest.mark.parametrize("n", [0, 3, 12, 2.5])
def test_hadamard_needs_power_of_two(n):
    with pytest.raises(NotPowerOfTwo):
        hadamard(n)


def test_bidiagonal_inverse_is_exact():
    for n in (1, 2, 5, 16):
        assert np.array_equal(bidiagonal(n) @ bidiagonal_inverse(n), np.eye(n))


def test_instance_of_size_four():
    """
    The drift w - q equals beta R^-1 H_2. R carries ones on its subdiagonal, so
    R^-1 has entries (-1)^(i-k) on and below the diagonal and cannot map H_2 to a
    positive vector: the drift alternates in sign while its magnitudes grow as
    k/3. X (w - q) still lands exactly on beta e_2.
    """
    instance = build_instance(4)
    drift = instance.w - instance.expected_q
    assert np.allclose(np.abs(drift), np.array([1, 2, 3, 4]) / 3)
    assert np.allclose(drift * np.array([1, -1, 1, -1]), np.array([1, 2, 3, 4]) / 3)
    residual = instance.X @ drift
    assert np.allclose(residual, instance.beta * np.eye(4)[:, 1])
    assert np.max(np.abs(residual)) == pytest.approx(2 / 3)
    assert np.linalg.norm(residual) == pytest.approx(2 / 3)
    assert np.max(np.abs(instance.w)) < 1
    assert instance.beta < 1 / (2 * np.max(np.abs(instance.H)))


def test_rounding_recovers_the_grid_vector():
    for n in (4, 16, 64):
        instance = build_instance(n)
        v = instance.expected_q + instance.beta * instance.H[:, instance.column_index - 1]
        assert np.array_equal(np.round(v), instance.expected_q)


def test_least_squares_optq_lands_on_the_construction(det_config):
    instance = build_instance(16)
    result = optq_column(instance.X, instance.w, det_config(lam=0.0, formulation="ls"))
    assert np.array_equal(result.q, instance.expected_q)


@pytest.mark.parametrize("n", [1, 12])
def test_build_instance_rejects_sizes(n):
    with pytest.raises(NotPowerOfTwo):
        build_instance(n)


def test_scaling_report():
    rows = scaling_report([4, 16, 64, 256], formulation="chol")
    for row in rows:
        assert row["matches_expected"]
        assert row["w_linf"] < 1
        assert row["linf_error"] == pytest.approx(row["expected_linf_error"], rel=1e-9)
        assert row["weight_drift"] == pytest.approx(row["expected_weight_drift"], rel=1e-9)
    for small, large in zip(rows, rows[1:]):
        assert 1.9 <= large["linf_error"] / small["linf_error"] <= 2.1
        assert 3.9 <= large["weight_drift"] / small["weight_drift"] <= 4.1


def test_scaling_report_least_squares_agrees():
    chol = scaling_report([4, 16], formulation="chol")
    ls = scaling_report([4, 16])
    assert [row["weight_drift"] for row in chol] == pytest.approx(
        [row["weight_drift"] for row in ls]
    )
