import numpy as np
import pytest

from quant_lab.alphabet.alphabet import Alphabet, msq
from quant_lab.quantizers.optq import optq_column
from quant_lab.quantizers.qronos import (
    QronosInput,
    drift_norm,
    optq_drifted_bound,
    qronos_column,
    qronos_error_decomposition,
    qronos_l2_bound,
    qronos_layer,
)
from quant_lab.utils.errors import DimensionMismatch


def drifted(seed, sigma, m=32, n=16):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, n))
    X_tilde = X + sigma * rng.standard_normal((m, n))
    return X, X_tilde, rng.uniform(-1, 1, n)


def assert_reconstructs(e_N, leading, terms):
    total = leading + sum(terms)
    assert np.linalg.norm(total - e_N) <= 1e-8 * max(np.linalg.norm(e_N), 1e-12)


def test_undrifted_qronos_matches_least_squares_optq(det_config):
    cfg = det_config(lam=0.0, formulation="ls")
    for seed in range(30):
        X, _, w = drifted(seed, 0.0)
        result = qronos_column(QronosInput(X, X, 3 * w, cfg))
        assert np.array_equal(result.q, optq_column(X, 3 * w, cfg).q), f"seed {seed}"


def test_grid_valued_weights_are_kept(det_config):
    X, _, _ = drifted(1, 0.0, 12, 6)
    w = np.array([2.0, -1.0, 0.0, 1.0, 3.0, -2.0])
    result = qronos_column(QronosInput(X, X, w, det_config(lam=0.0)))
    assert np.array_equal(result.q, w)
    assert np.allclose(X @ w - X @ result.q, 0)


@pytest.mark.parametrize("sigma", [0.0, 0.01, 0.1])
@pytest.mark.parametrize("formulation", ["chol", "ls"])
def test_error_formula_reconstructs(sigma, formulation, det_config):
    cfg = det_config(lam=0.0, formulation=formulation)
    for seed in range(34):
        X, X_tilde, w = drifted(seed, sigma)
        inp = QronosInput(X, X_tilde, 2 * w, cfg)
        result = qronos_column(inp)
        e_N, leading, terms = qronos_error_decomposition(inp, result)
        assert np.allclose(e_N, X @ (2 * w) - X_tilde @ result.q, atol=1e-10)
        assert_reconstructs(e_N, leading, terms)
        assert np.linalg.norm(leading) <= drift_norm(inp) * (1 + 1e-12) + 1e-12
        assert np.all(np.abs(result.trace.residue) <= 0.5 + 1e-12)


def test_undrifted_leading_term_vanishes(det_config):
    X, _, w = drifted(2, 0.0)
    inp = QronosInput(X, X, w, det_config(lam=0.0))
    _, leading, _ = qronos_error_decomposition(inp, qronos_column(inp))
    assert np.linalg.norm(leading) < 1e-10 * np.linalg.norm(X @ w)


def test_deterministic_l2_bound_and_optq_comparison(det_config):
    X, X_tilde, w = drifted(3, 0.01)
    inp = QronosInput(X, X_tilde, w, det_config(lam=0.0))
    result = qronos_column(inp)
    realized, bound = qronos_l2_bound(inp, result, delta=1.0)
    assert realized == pytest.approx(np.linalg.norm(X @ w - X_tilde @ result.q))
    assert realized <= bound
    assert bound <= optq_drifted_bound(inp, 1.0) + 1e-12


def test_dampened_qronos_reconstructs_on_augmented_system(det_config):
    X, X_tilde, w = drifted(4, 0.1, 20, 10)
    inp = QronosInput(X, X_tilde, 2 * w, det_config(lam=0.3))
    result = qronos_column(inp)
    e_N, leading, terms = qronos_error_decomposition(inp, result)
    assert e_N.shape == (30,)
    assert np.allclose(e_N[:20], X @ (2 * w) - X_tilde @ result.q)
    assert np.allclose(e_N[20:], np.sqrt(0.3) * (2 * w - result.q))
    assert_reconstructs(e_N, leading, terms)


@pytest.mark.parametrize("formulation", ["chol", "ls"])
def test_least_squares_initialisation(formulation, det_config):
    cfg = det_config(lam=0.0, formulation=formulation, ls_init=True)
    for seed in range(10):
        X, X_tilde, w = drifted(seed, 0.05)
        inp = QronosInput(X, X_tilde, 2 * w, cfg)
        result = qronos_column(inp)
        e_N, leading, terms = qronos_error_decomposition(inp, result)
        assert_reconstructs(e_N, leading, terms)
        assert np.all(np.abs(X_tilde.T @ leading) < 1e-8 * np.linalg.norm(X @ w))
        assert np.linalg.norm(leading) <= drift_norm(inp) + 1e-12


def test_zero_first_column_falls_back_to_rounding_w1(det_config):
    X, X_tilde, w = drifted(5, 0.05, 16, 8)
    X_tilde[:, 0] = 0.0
    inp = QronosInput(X, X_tilde, 3 * w, det_config(lam=0.0, formulation="ls"))
    result = qronos_column(inp)
    assert result.trace.zero_first_column
    assert result.q[0] == msq(3 * w[0], Alphabet(1.0))
    assert_reconstructs(*qronos_error_decomposition(inp, result))


def test_layer_forms(det_config, stoc_config):
    X, X_tilde, _ = drifted(6, 0.05, 24, 12)
    W = np.random.default_rng(6).uniform(-2, 2, (12, 6))
    cfg = stoc_config(seed=8, lam=0.0)
    serial = qronos_layer(X, X_tilde, W, cfg)
    parallel = qronos_layer(X, X_tilde, W, cfg.with_updates(threads=3))
    assert np.array_equal(serial.q, parallel.q)
    single = qronos_layer(X, X_tilde, W[:, :1], cfg)
    assert np.array_equal(single.q[:, 0], qronos_column(QronosInput(X, X_tilde, W[:, 0], cfg)).q)
    grid = np.round(W)
    assert np.array_equal(qronos_layer(X, X, grid, det_config(lam=0.0)).q, grid)


def test_ordering_uses_drifted_norms(det_config):
    X, X_tilde, w = drifted(7, 0.1, 16, 6)
    X_tilde = X_tilde * np.array([1.0, 5.0, 2.0, 4.0, 3.0, 6.0])
    result = qronos_column(QronosInput(X, X_tilde, w, det_config(lam=0.0, ordering="desc")))
    assert np.array_equal(result.permutation, np.argsort(-np.linalg.norm(X_tilde, axis=0)))


def test_shape_mismatch_rejected(det_config):
    with pytest.raises(DimensionMismatch):
        QronosInput(np.eye(3), np.eye(4), np.zeros(3), det_config())
    with pytest.raises(DimensionMismatch):
        QronosInput(np.eye(3), np.eye(3), np.zeros(4), det_config())
