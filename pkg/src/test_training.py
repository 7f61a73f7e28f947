import numpy as np
import pytest

from data.models import DecoderParams, TrainConfig
from errors import ArgumentError
from services import prng
from services.decoder import channel_llr, decode_batch
from services.gf2_ldpc import is_codeword
from services.simulation import bsc_flip, monte_carlo_fer
from services.training import backward, loss_bce, train_greedy, training_frames, unroll_forward

EPS = 1e-6
GRADIENT_CONFIGS = 100


def _loss(h, llr, params, target):
    return loss_bce(unroll_forward(h, llr, params).final_s, target)


def _finite_differences(h, llr, params, target):
    grads = []
    for name in ("alpha", "beta"):
        values = getattr(params, name)
        grad = np.zeros_like(values)
        for position in np.ndindex(values.shape):
            shifted = []
            for step in (EPS, -EPS):
                alpha, beta = params.alpha.copy(), params.beta.copy()
                (alpha if name == "alpha" else beta)[position] += step
                moved = DecoderParams(params.variant, params.iterations, params.mode, alpha, beta)
                shifted.append(_loss(h, llr, moved, target))
            grad[position] = (shifted[0] - shifted[1]) / (2 * EPS)
        grads.append(grad)
    return grads


def _random_llr(seed, frames, n):
    return (prng.uniforms(seed, frames * n).reshape(frames, n) - 0.5) * 6.0


def _random_params(seed, iterations, mode, edges):
    shape = (iterations,) if mode == "shared" else (iterations, edges)
    size = int(np.prod(shape))
    alpha = 0.6 + 0.4 * prng.uniforms(prng.derive_seed(seed, 0), size).reshape(shape)
    beta = 0.1 * prng.uniforms(prng.derive_seed(seed, 1), size).reshape(shape)
    return DecoderParams("neural", iterations, mode, alpha, beta)


def test_backward_matches_finite_differences_per_configuration(tiny_code):
    h = tiny_code.h
    for config in range(GRADIENT_CONFIGS):
        seed = prng.derive_seed(60, config)
        mode = "shared" if config % 2 == 0 else "per-edge"
        params = _random_params(seed, 2 + config % 3 if mode == "shared" else 2, mode, h.edge_count)
        llr = _random_llr(prng.derive_seed(seed, 2), 3, h.n)
        target = prng.random_bits(prng.derive_seed(seed, 3), 3 * h.n).reshape(3, h.n)

        analytic = np.concatenate([g.ravel() for g in backward(unroll_forward(h, llr, params), target)])
        numeric = np.concatenate([g.ravel() for g in _finite_differences(h, llr, params, target)])
        error = np.linalg.norm(analytic - numeric)
        assert error <= 1e-3 * np.linalg.norm(numeric) + 1e-9, f"configuration {config} ({mode})"


def test_backward_depth_one_touches_only_last_iteration(tiny_code):
    params = DecoderParams("neural", 3, "shared", np.full(3, 0.8), np.full(3, 0.05))
    trace = unroll_forward(tiny_code.h, _random_llr(64, 3, tiny_code.n), params)
    grad_alpha, grad_beta = backward(trace, np.zeros((3, tiny_code.n), dtype=np.uint8), depth=1)
    assert grad_alpha[:2].tolist() == [0.0, 0.0]
    assert grad_beta[:2].tolist() == [0.0, 0.0]


def test_loss_bce():
    assert loss_bce([0.0, 0.0], [0, 1]) == pytest.approx(np.log(2.0))
    assert loss_bce([40.0], [0]) == pytest.approx(0.0, abs=1e-12)
    assert loss_bce([-2.0], [1]) == pytest.approx(np.log1p(np.exp(-2.0)))
    with pytest.raises(ArgumentError):
        loss_bce([0.0, 1.0], [0])


def test_unroll_rejects_untrainable_variant(tiny_code):
    with pytest.raises(ArgumentError):
        unroll_forward(tiny_code.h, np.ones(tiny_code.n), DecoderParams.classical("sp", 3))


def test_training_frames_are_deterministic_codewords(tiny_code):
    cfg = TrainConfig(2, frames_per_epoch=12, seed=5)
    codewords, received = training_frames(tiny_code.g, cfg, 1, 3)
    assert is_codeword(tiny_code.h, codewords).all()
    again = training_frames(tiny_code.g, cfg, 1, 3)
    np.testing.assert_array_equal(again[1], received)
    assert not np.array_equal(training_frames(tiny_code.g, cfg, 1, 4)[1], received)


def test_zero_epochs_give_plain_min_sum(tiny_code):
    params = train_greedy(tiny_code.h, TrainConfig(4, epochs_per_layer=0), tiny_code.g)
    np.testing.assert_array_equal(params.alpha, np.ones(4))
    np.testing.assert_array_equal(params.beta, np.zeros(4))


def test_training_is_reproducible(tiny_code):
    cfg = TrainConfig(3, frames_per_epoch=16, epochs_per_layer=3, seed=8)
    first = train_greedy(tiny_code.h, cfg, tiny_code.g)
    second = train_greedy(tiny_code.h, cfg, tiny_code.g)
    np.testing.assert_array_equal(first.alpha, second.alpha)
    np.testing.assert_array_equal(first.beta, second.beta)


@pytest.mark.parametrize("variant", ["nms", "oms"])
def test_constrained_variants_train_one_factor(tiny_code, variant):
    cfg = TrainConfig(3, frames_per_epoch=16, epochs_per_layer=3, seed=9, variant=variant)
    params = train_greedy(tiny_code.h, cfg, tiny_code.g)
    assert params.variant == variant
    if variant == "nms":
        assert not params.beta.any()
    else:
        np.testing.assert_array_equal(params.alpha, np.ones(3))
    assert (params.alpha >= 1e-3).all() and (params.beta >= 0).all()


def test_per_edge_training_shapes(tiny_code):
    cfg = TrainConfig(2, frames_per_epoch=8, epochs_per_layer=2, mode="per-edge")
    params = train_greedy(tiny_code.h, cfg, tiny_code.g)
    assert params.alpha.shape == (2, tiny_code.h.edge_count)
    assert params.parameter_count == 4 * tiny_code.h.edge_count


def test_dead_clamp_gives_zero_gradients(tiny_code):
    params = DecoderParams("neural", 2, "shared", np.array([0.9, 0.8]), np.array([0.05, 50.0]))
    llr = _random_llr(65, 3, tiny_code.n)
    trace = unroll_forward(tiny_code.h, llr, params)
    assert not trace.layers[-1].check.active.any()
    grad_alpha, grad_beta = backward(trace, np.zeros((3, tiny_code.n), dtype=np.uint8))
    assert not grad_alpha.any() and not grad_beta.any()


def test_gradients_scale_with_the_loss(tiny_code):
    params = _random_params(66, 3, "shared", tiny_code.h.edge_count)
    trace = unroll_forward(tiny_code.h, _random_llr(67, 4, tiny_code.n), params)
    target = np.zeros((4, tiny_code.n), dtype=np.uint8)
    grad_alpha, grad_beta = backward(trace, target)
    double_alpha, double_beta = backward(trace, target, loss_scale=2.0)
    np.testing.assert_allclose(double_alpha, 2.0 * grad_alpha, rtol=1e-12)
    np.testing.assert_allclose(double_beta, 2.0 * grad_beta, rtol=1e-12)
    assert np.abs(grad_alpha).sum() > 0


def test_unit_factor_trace_follows_min_sum_decoding(bg2_code):
    llr = channel_llr(bsc_flip(np.zeros((6, bg2_code.n), dtype=np.uint8), 0.16, 12, 0), 0.17)
    trace = unroll_forward(bg2_code.h, llr, DecoderParams("neural", 15))
    decoded = decode_batch(bg2_code.h, llr, DecoderParams.classical("ms", 15), early_exit=False, snapshots=True)
    decisions = trace.hard_decisions()
    assert len(decisions) == 15
    for index, bits in enumerate(decisions):
        np.testing.assert_array_equal(bits, decoded.per_iteration_bits[index])


@pytest.mark.slow
def test_trained_neural_min_sum_capability(bg2_code, trained_neural):
    frames = 10000
    neural = monte_carlo_fer(bg2_code, trained_neural, [0.16, 0.17, 0.1762], frames, seed=2024, decode_p=0.17, workers=4)
    plain = monte_carlo_fer(
        bg2_code, DecoderParams.classical("ms", 100), [0.16, 0.17], frames, seed=2024, decode_p=0.17, workers=4
    )
    exact = monte_carlo_fer(bg2_code, DecoderParams.classical("sp", 100), [0.16, 0.17], frames, seed=2024, workers=4)
    for p in (0.16, 0.17):
        assert neural.fer(p) < plain.fer(p)
        assert exact.fer(p) <= neural.fer(p) + 0.02
    assert 0.03 <= neural.fer(0.1762) <= 0.10
