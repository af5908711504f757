import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

import oracles
from hemocult.errors import (CheckpointError, ContractViolationError,
                             ShapeError)
from hemocult.lstm import (CellParams, ModelParams, backward, backward_batch,
                           cell_step, forward, forward_batch, init_params,
                           load_params, save_params, weighted_mse,
                           zeros_like_params)


def zero_cell(H, n_in=9):
    return CellParams(np.zeros((4 * H, n_in)), np.zeros((4 * H, H)), np.zeros(4 * H))


def zero_model(H):
    return ModelParams(zero_cell(H), zero_cell(H), np.zeros(2 * H), np.zeros(1))


def noisy_params(H, seed, scale=0.2):
    rng = np.random.default_rng(seed)
    p = init_params(H, rng)
    for _, arr in p.named_arrays():
        arr += rng.normal(0.0, scale, size=arr.shape)
    return p, rng


def flat_grad_norm(grads):
    return math.sqrt(sum(float((arr * arr).sum()) for _, arr in grads.named_arrays()))


def test_cell_step_zero_fixed_point():
    h, c = cell_step(np.zeros(9), np.zeros(2), np.zeros(2), zero_cell(2))
    assert np.array_equal(h, np.zeros(2))
    assert np.array_equal(c, np.zeros(2))


def test_cell_step_zero_params_halve_cell_state():
    # i = f = o = 0.5 and g = 0, so c = u/2 and h = tanh(u/2)/2
    u = np.array([0.8, -1.7, 0.05])
    h, c = cell_step(np.zeros(9), np.zeros(3), u, zero_cell(3))
    assert np.array_equal(c, 0.5 * u)
    assert np.array_equal(h, 0.5 * np.tanh(0.5 * u))


def test_cell_step_saturated_gates():
    p = zero_cell(1)
    p.b[0] = 20.0   # input gate open
    p.b[1] = -20.0  # forget gate shut
    p.b[2] = 20.0   # output gate open
    h, c = cell_step(np.zeros(9), np.zeros(1), np.zeros(1), p)
    assert h[0] == 0.0 and c[0] == 0.0  # candidate tanh(0) kills the update
    p.b[3] = 20.0  # candidate saturated at 1
    h, c = cell_step(np.zeros(9), np.zeros(1), np.zeros(1), p)
    assert c[0] == pytest.approx(1.0, abs=1e-3)
    assert h[0] == pytest.approx(np.tanh(1.0), abs=1e-3)


def test_cell_step_shape_errors():
    p = zero_cell(2)
    with pytest.raises(ShapeError):
        cell_step(np.zeros(8), np.zeros(2), np.zeros(2), p)
    with pytest.raises(ShapeError):
        cell_step(np.zeros(9), np.zeros(3), np.zeros(2), p)
    bad = CellParams(np.zeros((8, 9)), np.zeros((8, 3)), np.zeros(8))
    with pytest.raises(ShapeError):
        cell_step(np.zeros(9), np.zeros(3), np.zeros(3), bad)


def test_forward_zero_params_scores_half():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(72, 9))
    score, _ = forward(X, zero_model(3))
    assert score == 0.5


def test_forward_head_bias_only():
    p = zero_model(2)
    p.head_b[0] = 10.0
    score, _ = forward(np.zeros((72, 9)), p)
    assert score == float(expit(10.0))
    assert score == pytest.approx(0.99995, abs=1e-4)


def test_forward_direction_swap_is_bit_exact():
    for seed in range(5):
        p, rng = noisy_params(4, seed)
        X = rng.normal(size=(72, 9))
        swapped = ModelParams(
            fwd=p.bwd.copy(), bwd=p.fwd.copy(),
            head_w=np.concatenate([p.head_w[4:], p.head_w[:4]]),
            head_b=p.head_b.copy(),
        )
        s1, _ = forward(X, p)
        s2, _ = forward(X[::-1].copy(), swapped)
        assert s1 == s2


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), bias=st.floats(-1e6, 1e6))
def test_forward_score_strictly_inside_unit_interval(seed, bias):
    rng = np.random.default_rng(seed)
    p = init_params(2, rng)
    p.head_b[0] = bias
    score, _ = forward(rng.normal(size=(72, 9)), p)
    assert 0.0 < score < 1.0


def test_forward_batch_matches_per_example():
    p, rng = noisy_params(3, 11)
    X = rng.normal(size=(6, 72, 9))
    batch_scores, _ = forward_batch(X, p)
    singles = np.array([forward(X[i], p)[0] for i in range(6)])
    np.testing.assert_allclose(batch_scores, singles, rtol=0.0, atol=1e-10)


def test_forward_batch_shape_error():
    p = zero_model(2)
    with pytest.raises(ShapeError):
        forward_batch(np.zeros((3, 72, 8)), p)
    with pytest.raises(ShapeError):
        forward_batch(np.zeros((72, 9)), p)


def test_weighted_mse_spot_values():
    assert weighted_mse([0.0, 1.0], [0, 1], 8.0, 1.0) == 0.0
    assert weighted_mse([0.5], [1], 8.0, 1.0) == 2.0
    rng = np.random.default_rng(1)
    s = rng.random(17)
    y = rng.integers(0, 2, size=17)
    plain = math.fsum((s - y) * (s - y))
    assert weighted_mse(s, y, 1.0, 1.0) == plain


def test_weighted_mse_validation():
    with pytest.raises(ShapeError):
        weighted_mse([0.5, 0.5], [1], 8.0, 1.0)
    with pytest.raises(ShapeError):
        weighted_mse([0.5], [1], 0.0, 1.0)
    with pytest.raises(ShapeError):
        weighted_mse([0.5], [1], 8.0, -2.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_weighted_mse_batch_equals_sum_of_examples(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 24))
    s = rng.random(n)
    y = rng.integers(0, 2, size=n)
    whole = weighted_mse(s, y, 8.0, 1.0)
    parts = [weighted_mse(s[i:i + 1], y[i:i + 1], 8.0, 1.0) for i in range(n)]
    assert whole == math.fsum(parts)


def test_backward_loss_equals_weighted_mse():
    p, rng = noisy_params(3, 5)
    X = rng.normal(size=(8, 72, 9))
    y = rng.integers(0, 2, size=8).astype(float)
    scores, cache = forward_batch(X, p)
    loss, _ = backward_batch(X, y, p, 8.0, 1.0, cache)
    assert loss == weighted_mse(scores, y, 8.0, 1.0)


def test_backward_saturated_target_gradients_vanish():
    p = zero_model(2)
    p.head_b[0] = 50.0  # score pinned against 1 from below
    X = np.random.default_rng(3).normal(size=(72, 9))
    score, cache = forward(X, p)
    assert 0.0 < score < 1.0
    _, grads = backward(X, 1, p, 8.0, 1.0, cache)
    worst = max(float(np.abs(arr).max()) for _, arr in grads.named_arrays())
    assert worst <= 1e-8


def test_backward_head_bias_gradient_by_hand():
    # zero params, y=1, w_pos=8: d loss / d head bias = 2*8*(0.5-1)*0.25
    p = zero_model(2)
    X = np.random.default_rng(4).normal(size=(72, 9))
    _, cache = forward(X, p)
    _, grads = backward(X, 1, p, 8.0, 1.0, cache)
    assert grads.head_b[0] == -2.0


def test_backward_rejects_stale_cache():
    p, rng = noisy_params(2, 9)
    X1 = rng.normal(size=(72, 9))
    X2 = rng.normal(size=(72, 9))
    _, cache = forward(X1, p)
    with pytest.raises(ContractViolationError):
        backward(X2, 1, p, 8.0, 1.0, cache)
    B1 = X1[None, :, :]
    _, bcache = forward_batch(B1, p)
    with pytest.raises(ContractViolationError):
        backward_batch(X2[None, :, :], np.array([1.0]), p, 8.0, 1.0, bcache)


def test_backward_batch_gradient_is_sum_over_examples():
    p, rng = noisy_params(2, 21)
    X = rng.normal(size=(4, 72, 9))
    y = np.array([1.0, 0.0, 0.0, 1.0])
    _, cache = forward_batch(X, p)
    _, grads = backward_batch(X, y, p, 8.0, 1.0, cache)
    total = zeros_like_params(p)
    for i in range(4):
        xi = X[i]
        _, ci = forward(xi, p)
        _, gi = backward(xi, y[i], p, 8.0, 1.0, ci)
        for (_, acc), (_, piece) in zip(total.named_arrays(), gi.named_arrays()):
            acc += piece
    for (_, a), (_, b) in zip(grads.named_arrays(), total.named_arrays()):
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_gradients_match_finite_differences_spot():
    for H, seed in ((1, 101), (2, 202)):
        p, rng = noisy_params(H, seed)
        X = rng.normal(size=(72, 9))
        label = int(rng.integers(0, 2))
        Xb = X[None, :, :]
        scores, cache = forward_batch(Xb, p)
        _, grads = backward_batch(Xb, np.array([float(label)]), p, 8.0, 1.0, cache)
        assert abs(float(oracles.forward_ld(X, p)) - float(scores[0])) < 1e-12
        assert oracles.fd_gradient_worst_error(p, X, label, grads) < 1e-6


def test_init_params_layout():
    H = 7
    p = init_params(H, 42)
    assert p.fwd.W.shape == (4 * H, 9)
    assert p.fwd.U.shape == (4 * H, H)
    assert p.head_w.shape == (2 * H,)
    assert p.head_b.shape == (1,)
    bound = 1.0 / np.sqrt(H)
    for cell in (p.fwd, p.bwd):
        assert np.abs(cell.W).max() <= bound
        assert np.abs(cell.U).max() <= bound
        assert np.array_equal(cell.b[H:2 * H], np.ones(H))  # forget bias
        assert not cell.b[:H].any() and not cell.b[2 * H:].any()
    q = init_params(H, 42)
    for (_, a), (_, b) in zip(p.named_arrays(), q.named_arrays()):
        assert np.array_equal(a, b)
    with pytest.raises(ShapeError):
        init_params(0, 1)


def test_model_params_validation():
    p = zero_model(2)
    bad = ModelParams(p.fwd, p.bwd, np.zeros(3), p.head_b)
    with pytest.raises(ShapeError):
        bad.validate()
    nan = zero_model(2)
    nan.fwd.W[0, 0] = np.nan
    with pytest.raises(ShapeError):
        nan.validate()


def test_checkpoint_roundtrip_is_bit_identical(tmp_path):
    p, _ = noisy_params(3, 77)
    path = tmp_path / "model.ckpt"
    save_params(p, path)
    q = load_params(path)
    for (name, a), (_, b) in zip(p.named_arrays(), q.named_arrays()):
        assert a.tobytes() == b.tobytes(), name
    # saving the loaded copy reproduces the file bytes
    again = tmp_path / "again.ckpt"
    save_params(q, again)
    assert path.read_bytes() == again.read_bytes()


def test_checkpoint_corruption_detected(tmp_path):
    import struct

    p, _ = noisy_params(2, 13)
    path = tmp_path / "model.ckpt"
    save_params(p, path)
    blob = path.read_bytes()

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"#something else\n" + blob)
    with pytest.raises(CheckpointError):
        load_params(bad_magic)

    short = tmp_path / "short.ckpt"
    short.write_bytes(blob[:-9])
    with pytest.raises(CheckpointError):
        load_params(short)

    trailing = tmp_path / "trailing.ckpt"
    trailing.write_bytes(blob + b"\x00")
    with pytest.raises(CheckpointError):
        load_params(trailing)

    magic_len = blob.index(b"\n") + 1
    lied = tmp_path / "lied.ckpt"
    lied.write_bytes(blob[:magic_len] + struct.pack("<I", 3) + blob[magic_len + 4:])
    with pytest.raises(CheckpointError):
        load_params(lied)
