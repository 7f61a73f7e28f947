"""
Unrolled neural min-sum: forward trace, BCE loss, reverse-mode gradients
for the per-iteration (alpha, beta) factors, and greedy layer-wise training.
"""
import logging
from typing import Any, List, Optional, Tuple

import numpy as np
from scipy.special import expit
from tqdm import tqdm

from data.models import DecoderParams, GeneratorMatrix, ParityCheck, TrainConfig, as_bits
from errors import ArgumentError, TrainingError
from services import prng
from services.decoder import (
    MinSumState, channel_llr, hard_decision, min_sum_check, validate_graph, variable_sums
)
from services.gf2_ldpc import derive_generator, encode_bits, tanner_graph

logger = logging.getLogger(__name__)

TRAINABLE_VARIANTS = ("neural", "nms", "oms")
ALPHA_FLOOR = 1e-3


class TraceLayer:
    """One unrolled iteration: VN sublayer output v2c, CN sublayer state, aggregate s"""
    def __init__(self, v2c: np.ndarray, check: MinSumState, s: np.ndarray):
        self.v2c = v2c
        self.check = check
        self.s = s


class ForwardTrace:
    def __init__(
        self,
        h: ParityCheck,
        params: DecoderParams,
        layers: List[TraceLayer],
        first_recorded: int,
        llr: np.ndarray
    ):
        self.h = h
        self.params = params
        self.layers = layers
        self.first_recorded = first_recorded
        self.llr = llr

    @property
    def final_s(self) -> np.ndarray:
        return self.layers[-1].s

    def hard_decisions(self) -> List[np.ndarray]:
        return [hard_decision(layer.s, self.llr) for layer in self.layers]


def unroll_forward(
    h: ParityCheck,
    llr: Any,
    params: DecoderParams,
    iters: Optional[int] = None,
    record_from: int = 0
) -> ForwardTrace:
    """
    Run ``iters`` flooding iterations without early exit, recording every
    iteration from ``record_from`` on for backward().
    """
    if params.variant not in TRAINABLE_VARIANTS:
        raise ArgumentError(f"cannot unroll the non-trainable variant '{params.variant}'")
    iters = iters or params.iterations
    if iters > params.iterations:
        raise ArgumentError(f"parameters cover {params.iterations} iterations, {iters} requested")
    if not 0 <= record_from < iters:
        raise ArgumentError(f"record_from must lie in [0, {iters}), got {record_from}")
    graph = tanner_graph(h)
    validate_graph(graph, params)
    llr = np.atleast_2d(np.asarray(llr, dtype=np.float64))

    layers: List[TraceLayer] = []
    v2c = llr[:, graph.var_of_edge]
    for index in range(iters):
        alpha, beta = params.layer(index)
        check = min_sum_check(graph, v2c, alpha, beta)
        s = variable_sums(graph, llr, check.c2v)
        if index >= record_from:
            layers.append(TraceLayer(v2c, check, s))
        v2c = s[:, graph.var_of_edge] - check.c2v
    return ForwardTrace(h, params, layers, record_from, llr)


def _bce_terms(s: np.ndarray, target: np.ndarray) -> np.ndarray:
    t = as_bits(target).astype(np.float64)
    # softplus via logaddexp; s > 0 means bit 0
    return t * np.logaddexp(0.0, s) + (1.0 - t) * np.logaddexp(0.0, -s)


def loss_bce(s: Any, target: Any) -> float:
    """Mean binary cross-entropy of sigma(-s) against the target bits"""
    s = np.asarray(s, dtype=np.float64)
    if s.shape != np.shape(target):
        raise ArgumentError(f"aggregate shape {s.shape} does not match target shape {np.shape(target)}")
    return float(_bce_terms(s, target).mean())


def backward(
    trace: ForwardTrace,
    target: Any,
    depth: Optional[int] = None,
    loss_scale: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of ``loss_scale * loss_bce(final s, target)`` w.r.t. alpha and beta.

    Back-propagates through the last ``depth`` recorded iterations; factors of
    other iterations get zero gradient. Conventions: the clamp kink counts as
    the zero branch, the min passes gradient only to its source edge, signs
    are constants.
    """
    params = trace.params
    graph = tanner_graph(trace.h)
    depth = depth or len(trace.layers)
    if depth > len(trace.layers):
        raise ArgumentError(f"trace records {len(trace.layers)} iterations, depth {depth} requested")
    target = as_bits(target).astype(np.float64)
    s = trace.final_s
    grad_alpha = np.zeros_like(params.alpha)
    grad_beta = np.zeros_like(params.beta)

    g_s = loss_scale * (expit(s) - (1.0 - target)) / s.size
    g_v2c_next: Optional[np.ndarray] = None
    batch, edges = s.shape[0], graph.edge_count
    rows = np.arange(batch)[:, None] * edges
    for position in range(len(trace.layers) - 1, len(trace.layers) - 1 - depth, -1):
        layer = trace.layers[position]
        index = trace.first_recorded + position
        alpha, _ = params.layer(index)
        check = layer.check

        g_c2v = g_s[:, graph.var_of_edge]
        if g_v2c_next is not None:
            g_c2v = g_c2v - g_v2c_next
        sign = np.where(check.negative, -1.0, 1.0)
        g_u = g_c2v * sign * check.active
        if params.mode == "shared":
            grad_alpha[index] = np.sum(g_u * check.ext_min)
            grad_beta[index] = -np.sum(g_u)
        else:
            grad_alpha[index] = np.sum(g_u * check.ext_min, axis=0)
            grad_beta[index] = -np.sum(g_u, axis=0)

        g_min = g_u * alpha
        source_v2c = np.take_along_axis(layer.v2c, check.min_source, axis=1)
        routed = g_min * np.where(source_v2c < 0, -1.0, 1.0)
        g_v2c = np.bincount(
            (rows + check.min_source).ravel(), weights=routed.ravel(), minlength=batch * edges
        ).reshape(batch, edges)

        g_v2c_next = g_v2c
        g_s = np.asarray(graph.var_incidence @ g_v2c.T).T
    return grad_alpha, grad_beta


def training_frames(
    g: GeneratorMatrix,
    cfg: TrainConfig,
    layer: int,
    epoch: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Deterministic batch of (codewords, received words) for one epoch.

    Messages are uniform, each frame's crossover rate is uniform on the
    configured range.
    """
    batch = cfg.frames_per_epoch
    seed = prng.derive_seed(cfg.seed, layer, epoch)
    messages = prng.random_bits(seed, batch * g.k).reshape(batch, g.k)
    low, high = cfg.p_range
    rates = low + (high - low) * prng.uniforms(seed, batch, offset=batch * g.k)
    noise = prng.uniforms(seed, batch * g.n, offset=batch * (g.k + 1)).reshape(batch, g.n)
    codewords = encode_bits(g, messages)
    received = codewords ^ (noise < rates[:, None]).astype(np.uint8)
    return codewords, received


def _initial_factors(cfg: TrainConfig, edges: int) -> Tuple[np.ndarray, np.ndarray]:
    shape = (cfg.iterations,) if cfg.mode == "shared" else (cfg.iterations, edges)
    return np.ones(shape), np.zeros(shape)


def train_greedy(
    h: ParityCheck,
    cfg: TrainConfig,
    g: Optional[GeneratorMatrix] = None,
    progress: bool = False
) -> DecoderParams:
    """
    Greedy iteration-by-iteration training.

    Iteration l is trained with iterations 0..l-1 frozen, starting from
    alpha=1, beta=0, by momentum gradient descent on the BCE of its own
    output. nms trains alpha only, oms beta only.
    """
    g = g or derive_generator(h)
    graph = tanner_graph(h)
    alpha, beta = _initial_factors(cfg, graph.edge_count)
    train_alpha = cfg.variant in ("neural", "nms")
    train_beta = cfg.variant in ("neural", "oms")

    layers = tqdm(range(cfg.iterations), desc="train", unit="layer", disable=not progress)
    for layer in layers:
        velocity_alpha = np.zeros_like(alpha[layer])
        velocity_beta = np.zeros_like(beta[layer])
        losses = []
        for epoch in range(cfg.epochs_per_layer):
            params = DecoderParams(cfg.variant, layer + 1, cfg.mode, alpha[:layer + 1], beta[:layer + 1])
            codewords, received = training_frames(g, cfg, layer, epoch)
            llr = channel_llr(received, cfg.decode_p)
            trace = unroll_forward(h, llr, params, record_from=layer)
            loss = loss_bce(trace.final_s, codewords)
            if not np.isfinite(loss):
                raise TrainingError("loss is not finite", layer + 1)
            losses.append(loss)
            grad_alpha, grad_beta = backward(trace, codewords, depth=1)
            if train_alpha:
                velocity_alpha = cfg.momentum * velocity_alpha - cfg.step_size * grad_alpha[layer]
                alpha[layer] = np.maximum(alpha[layer] + velocity_alpha, ALPHA_FLOOR)
            if train_beta:
                velocity_beta = cfg.momentum * velocity_beta - cfg.step_size * grad_beta[layer]
                beta[layer] = np.maximum(beta[layer] + velocity_beta, 0.0)
            if not (np.all(np.isfinite(alpha[layer])) and np.all(np.isfinite(beta[layer]))):
                raise TrainingError("factors diverged", layer + 1)
        if losses:
            logger.info(
                f"Layer {layer + 1}/{cfg.iterations}: loss {losses[0]:.5f} -> {losses[-1]:.5f}, "
                f"alpha={np.mean(alpha[layer]):.4f} beta={np.mean(beta[layer]):.4f}"
            )
    return DecoderParams(cfg.variant, cfg.iterations, cfg.mode, alpha, beta)
