"""
Flooding message-passing decoders over a binary symmetric channel.

All variants share one engine working on (B, E) edge arrays: variable-node
sums go through the sparse incidence matrix of the Tanner graph and check
nodes are evaluated on a padded (B, r, dmax) slot table. The min-sum family
(MS, NMS, OMS, neural MS) uses the single rule

    c2v = sign * max(alpha * min - beta, 0)

so that MS is alpha=1, beta=0, NMS fixes beta=0 and OMS fixes alpha=1.
"""
import logging
from typing import Any, Optional, Sequence

import numpy as np

from config import SP_CLAMP
from data.models import BitVector, ChannelConfig, DecodeResult, DecoderParams, ParityCheck, TannerGraph
from errors import ArgumentError
from services.gf2_ldpc import tanner_graph

logger = logging.getLogger(__name__)


def init_llr(received: Any, ch: ChannelConfig) -> np.ndarray:
    """Channel LLRs (1 - 2y) * ln((1-p)/p); positive means bit 0"""
    bits = received.bits if isinstance(received, BitVector) else np.asarray(received)
    return (1.0 - 2.0 * bits.astype(np.float64)) * ch.llr_magnitude


def cn_update(
    variant: str,
    incoming: Sequence[float],
    alpha: float = 1.0,
    beta: float = 0.0,
    clamp: float = SP_CLAMP
) -> float:
    """
    Check-to-variable message from the extrinsic incoming messages of one check.

    Reference (scalar) form of the batched rules used by decode().
    """
    values = np.asarray(incoming, dtype=np.float64)
    if values.size == 0:
        raise ArgumentError("check-node update needs at least one incoming message")
    if variant == "sp":
        product = np.prod(np.tanh(np.clip(values, -clamp, clamp) / 2.0))
        return float(2.0 * np.arctanh(product))
    if variant not in ("ms", "nms", "oms", "neural"):
        raise ArgumentError(f"unknown decoder variant '{variant}'")
    if variant == "ms":
        alpha, beta = 1.0, 0.0
    elif variant == "nms":
        beta = 0.0
    elif variant == "oms":
        alpha = 1.0
    sign = -1.0 if np.count_nonzero(values < 0) % 2 else 1.0
    return float(sign * max(alpha * np.abs(values).min() - beta, 0.0))


def vn_update(llr: float, incoming: Sequence[float]) -> float:
    """Channel LLR plus the sum of the given check messages"""
    return float(llr + np.sum(incoming))


def _gather(graph: TannerGraph, edge_values: np.ndarray, pad: float) -> np.ndarray:
    batch = edge_values.shape[0]
    padded = np.concatenate([edge_values, np.full((batch, 1), pad, dtype=edge_values.dtype)], axis=1)
    return padded[:, graph.slots]


def _scatter(graph: TannerGraph, slot_values: np.ndarray) -> np.ndarray:
    batch = slot_values.shape[0]
    return slot_values.reshape(batch, -1)[:, graph.slot_valid]


def _edge_factor(graph: TannerGraph, factor: Any, pad: float) -> Any:
    """Per-edge factors laid out on the slot table; scalars pass through"""
    if np.ndim(factor) == 0:
        return float(factor)
    if np.shape(factor) != (graph.edge_count,):
        raise ArgumentError(
            f"per-edge factors cover {np.shape(factor)[0]} edges, graph has {graph.edge_count}"
        )
    return np.concatenate([factor, [pad]])[graph.slots][None, :, :]


class MinSumState:
    """Intermediate quantities of one min-sum check update (kept for training)"""
    def __init__(
        self,
        c2v: np.ndarray,
        ext_min: np.ndarray,
        min_source: np.ndarray,
        negative: np.ndarray,
        active: np.ndarray
    ):
        self.c2v = c2v
        self.ext_min = ext_min
        self.min_source = min_source
        self.negative = negative
        self.active = active


def min_sum_check(graph: TannerGraph, v2c: np.ndarray, alpha: Any, beta: Any) -> MinSumState:
    """
    Batched min-sum family check update.

    ext_min on every edge is the smallest |v2c| over the other edges of its
    check; min_source names the edge it came from (ties go to the lowest
    edge id). The sign is the product over the other edges, with sgn(0) = +1.
    """
    mags = _gather(graph, np.abs(v2c), np.inf)
    neg = _gather(graph, v2c < 0, False)

    first = np.argmin(mags, axis=2)
    min1 = np.take_along_axis(mags, first[..., None], axis=2)
    masked = mags.copy()
    np.put_along_axis(masked, first[..., None], np.inf, axis=2)
    second = np.argmin(masked, axis=2)
    min2 = np.take_along_axis(masked, second[..., None], axis=2)

    slot_ids = np.arange(graph.max_check_degree)[None, None, :]
    is_first = slot_ids == first[..., None]
    ext_min_slots = np.where(is_first, min2, min1)
    source_slot = np.where(is_first, second[..., None], first[..., None])
    source_edge = np.take_along_axis(np.broadcast_to(graph.slots, mags.shape), source_slot, axis=2)

    parity = np.logical_xor.reduce(neg, axis=2)
    ext_neg = neg ^ parity[..., None]

    u = _edge_factor(graph, alpha, 1.0) * ext_min_slots - _edge_factor(graph, beta, 0.0)
    magnitude = np.maximum(u, 0.0)
    c2v_slots = np.where(ext_neg, -magnitude, magnitude)

    return MinSumState(
        c2v=_scatter(graph, c2v_slots),
        ext_min=_scatter(graph, ext_min_slots),
        min_source=_scatter(graph, source_edge),
        negative=_scatter(graph, ext_neg),
        active=_scatter(graph, u > 0)
    )


def sum_product_check(graph: TannerGraph, v2c: np.ndarray, clamp: float = SP_CLAMP) -> np.ndarray:
    """Exclusive tanh-product rule via prefix/suffix products over each check"""
    t = _gather(graph, np.tanh(np.clip(v2c, -clamp, clamp) / 2.0), 1.0)
    ones = np.ones(t.shape[:2] + (1,))
    prefix = np.cumprod(np.concatenate([ones, t[..., :-1]], axis=2), axis=2)
    suffix = np.cumprod(np.concatenate([ones, t[..., :0:-1]], axis=2), axis=2)[..., ::-1]
    return _scatter(graph, 2.0 * np.arctanh(prefix * suffix))


def check_update(graph: TannerGraph, v2c: np.ndarray, params: DecoderParams, index: int) -> np.ndarray:
    if params.variant == "sp":
        return sum_product_check(graph, v2c)
    alpha, beta = params.layer(index)
    return min_sum_check(graph, v2c, alpha, beta).c2v


def variable_sums(graph: TannerGraph, llr: np.ndarray, c2v: np.ndarray) -> np.ndarray:
    """s_v = llr_v + sum of all incoming check messages"""
    return llr + np.asarray(graph.var_incidence @ c2v.T).T


def hard_decision(s: np.ndarray, llr: Optional[np.ndarray] = None) -> np.ndarray:
    """Bit 1 where s < 0; an exact zero falls back to the channel decision"""
    if llr is None:
        return (s < 0).astype(np.uint8)
    return np.where(s == 0, llr < 0, s < 0).astype(np.uint8)


def validate_graph(graph: TannerGraph, params: DecoderParams) -> None:
    if graph.r and graph.check_degrees.min() < 2:
        raise ArgumentError("every check must have degree >= 2 for message passing")
    if params.mode == "per-edge" and params.alpha.shape[1:] != (graph.edge_count,):
        raise ArgumentError(
            f"per-edge parameters cover {params.alpha.shape[1:]} edges, graph has {graph.edge_count}"
        )


def decode_batch(
    h: ParityCheck,
    llr: np.ndarray,
    params: DecoderParams,
    early_exit: bool = True,
    snapshots: bool = False,
    iterations: Optional[int] = None
) -> DecodeResult:
    """
    Decode a (B, n) batch of channel LLRs.

    With early_exit a frame freezes at the first iteration whose hard
    decision satisfies every check. When snapshots is set the hard decision
    after each iteration is kept as per_iteration_bits of shape (I, B, n);
    frozen frames repeat their final decision.
    """
    llr = np.atleast_2d(np.asarray(llr, dtype=np.float64))
    if llr.shape[1] != h.n:
        raise ArgumentError(f"LLR length {llr.shape[1]} does not match n={h.n}")
    iterations = iterations or params.iterations
    if params.variant not in ("sp", "ms") and iterations > params.iterations:
        raise ArgumentError(f"parameters cover {params.iterations} iterations, {iterations} requested")
    graph = tanner_graph(h)
    validate_graph(graph, params)

    batch = llr.shape[0]
    bits = hard_decision(llr)
    iterations_used = np.zeros(batch, dtype=np.int64)
    converged = np.zeros(batch, dtype=bool)
    history = np.zeros((iterations, batch, h.n), dtype=np.uint8) if snapshots else None

    active = np.arange(batch)
    v2c = llr[:, graph.var_of_edge]
    for index in range(iterations):
        c2v = check_update(graph, v2c, params, index)
        s = variable_sums(graph, llr[active], c2v)
        decided = hard_decision(s, llr[active])
        bits[active] = decided
        iterations_used[active] = index + 1
        if history is not None:
            history[index] = bits
        if early_exit:
            ok = ~(np.asarray(h.matrix @ decided.T.astype(np.int64)).T & 1).any(axis=1)
            converged[active[ok]] = True
            if ok.all():
                if history is not None:
                    history[index + 1:] = bits
                break
            keep = ~ok
            active = active[keep]
            s, c2v = s[keep], c2v[keep]
        v2c = s[:, graph.var_of_edge] - c2v

    if not early_exit:
        converged = ~(np.asarray(h.matrix @ bits.T.astype(np.int64)).T & 1).any(axis=1)
    return DecodeResult(bits, iterations_used, converged, history)


def decode(
    h: ParityCheck,
    llr: Any,
    params: DecoderParams,
    early_exit: bool = True,
    snapshots: bool = False,
    iterations: Optional[int] = None
) -> DecodeResult:
    """Decode a single frame; see decode_batch"""
    result = decode_batch(h, np.asarray(llr, dtype=np.float64)[None, :], params, early_exit, snapshots, iterations)
    history = result.per_iteration_bits[:, 0] if result.per_iteration_bits is not None else None
    return DecodeResult(
        result.bits[0],
        int(result.iterations_used[0]),
        bool(result.converged[0]),
        history
    )


def channel_llr(received: np.ndarray, p: float) -> np.ndarray:
    """LLRs for a (B, n) batch of received bits"""
    return init_llr(received, ChannelConfig(p))
