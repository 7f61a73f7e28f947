"""
GF(2) code construction: circulant lifting of a base graph, generator
derivation by Gaussian elimination, encoding and syndromes.
"""
import logging
from functools import lru_cache
from typing import Any, Tuple, List

import numpy as np

from data.models import BaseGraph, BitVector, GeneratorMatrix, ParityCheck, TannerGraph, as_bits
from errors import ArgumentError, RankDeficiencyError

logger = logging.getLogger(__name__)


def lift(bg: BaseGraph, z: int) -> ParityCheck:
    """
    Expand every base entry (i, j, s) into a z x z circulant block.

    Row t of the block has its single 1 at column (t + s) mod z; absent
    entries are zero blocks.
    """
    if z < 1:
        raise ArgumentError(f"lifting factor must be >= 1, got {z}")
    rows_adj: List[List[int]] = [[] for _ in range(bg.rows * z)]
    t = np.arange(z)
    for row, col, shift in bg.entries:
        targets = col * z + (t + shift) % z
        for offset in range(z):
            rows_adj[row * z + offset].append(int(targets[offset]))
    return ParityCheck(bg.cols * z, rows_adj)


def row_reduce(matrix: Any) -> Tuple[np.ndarray, List[int]]:
    """
    Reduced row echelon form over GF(2).

    Pivots are chosen scanning columns left to right; returns the non-zero
    rows and the pivot column of each.
    """
    m = as_bits(matrix).copy()
    rows, cols = m.shape
    pivots: List[int] = []
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        hits = np.flatnonzero(m[rank:, col])
        if hits.size == 0:
            continue
        pivot = rank + int(hits[0])
        if pivot != rank:
            m[[rank, pivot]] = m[[pivot, rank]]
        others = np.flatnonzero(m[:, col])
        others = others[others != rank]
        m[others] ^= m[rank]
        pivots.append(col)
        rank += 1
    return m[:rank], pivots


def gf2_rank(matrix: Any) -> int:
    return len(row_reduce(matrix)[1])


def derive_generator(h: ParityCheck) -> GeneratorMatrix:
    """
    Systematic encoder for H.

    Pivot columns of the reduced H become parity positions; the remaining
    (free) columns carry the message. Raises RankDeficiencyError unless H has
    full row rank.
    """
    reduced, pivots = row_reduce(h.dense())
    if len(pivots) < h.r:
        raise RankDeficiencyError(len(pivots), h.r)
    pivot_set = set(pivots)
    free = [col for col in range(h.n) if col not in pivot_set]
    # Row i of the RREF reads c[pivot_i] = sum_f R[i, f] c[f]
    parity_rows = reduced[:, free]
    g = GeneratorMatrix(h.n, free, pivots, parity_rows)
    logger.debug(f"Derived generator: n={g.n} k={g.k}")
    return g


def encode_bits(g: GeneratorMatrix, messages: Any) -> np.ndarray:
    """Encode a (..., k) array of message bits into (..., n) codewords"""
    messages = as_bits(messages)
    if messages.shape[-1] != g.k:
        raise ArgumentError(f"message length {messages.shape[-1]} does not match k={g.k}")
    codewords = np.zeros(messages.shape[:-1] + (g.n,), dtype=np.uint8)
    codewords[..., g.info_positions] = messages
    parity = messages.astype(np.int64) @ g.parity_rows.T.astype(np.int64)
    codewords[..., g.parity_positions] = (parity & 1).astype(np.uint8)
    return codewords


def encode(g: GeneratorMatrix, message: BitVector) -> BitVector:
    if len(message) != g.k:
        raise ArgumentError(f"message length {len(message)} does not match k={g.k}")
    return BitVector.from_bits(encode_bits(g, message.bits))


def extract_message(g: GeneratorMatrix, codewords: Any) -> np.ndarray:
    """Message bits read back from the info positions of (..., n) words"""
    return as_bits(codewords)[..., g.info_positions]


def syndrome_bits(h: ParityCheck, words: Any) -> np.ndarray:
    """Syndromes of a (n,) word or a (B, n) batch"""
    words = as_bits(words)
    if words.shape[-1] != h.n:
        raise ArgumentError(f"word length {words.shape[-1]} does not match n={h.n}")
    flat = words.reshape(-1, h.n).astype(np.int64)
    sums = (h.matrix.astype(np.int64) @ flat.T).T
    return (sums & 1).astype(np.uint8).reshape(words.shape[:-1] + (h.r,))


def syndrome(h: ParityCheck, word: BitVector) -> BitVector:
    if len(word) != h.n:
        raise ArgumentError(f"word length {len(word)} does not match n={h.n}")
    return BitVector.from_bits(syndrome_bits(h, word.bits))


def is_codeword(h: ParityCheck, words: Any) -> np.ndarray:
    return ~syndrome_bits(h, words).any(axis=-1)


@lru_cache(maxsize=16)
def tanner_graph(h: ParityCheck) -> TannerGraph:
    """Edge-indexed view of H, built once per ParityCheck"""
    return TannerGraph(h)
