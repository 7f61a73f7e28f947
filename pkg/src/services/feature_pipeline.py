"""
Feature transformation: equally-probable quantization, LSSC binarization,
global seeded permutation and adaptive random masking.
"""
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from data.models import BinaryTemplate, MaskBits, PipelineConfig, QuantizerTable, ScoreStats, as_bits
from errors import ArgumentError, FitError, UndefinedResultError, UnreachableTauError
from services import prng
from services.metrics import decidability

logger = logging.getLogger(__name__)

KAPPA_BISECTION_STEPS = 40
UNREACHABLE_SLACK = 0.01
MAX_PAIR_ROUNDS = 64


def fit_quantizer(calibration: Any, q: int) -> QuantizerTable:
    """
    Cut points at the j/q empirical quantiles (j = 1..q-1) of every dimension,
    linearly interpolated between order statistics.
    """
    data = np.asarray(calibration, dtype=np.float64)
    if data.ndim != 2:
        raise ArgumentError(f"calibration must be a (samples, dim) matrix, got shape {data.shape}")
    if q < 2:
        raise ArgumentError(f"q must be >= 2, got {q}")
    for dim in range(data.shape[1]):
        if np.unique(data[:, dim]).size < q:
            raise FitError(f"fewer than {q} distinct values", dim)
    levels = np.arange(1, q) / q
    boundaries = np.quantile(data, levels, axis=0).T
    if q > 2:
        flat = np.flatnonzero((np.diff(boundaries, axis=1) <= 0).any(axis=1))
        if flat.size:
            raise FitError("quantile boundaries are not strictly increasing", int(flat[0]))
    return QuantizerTable(q, boundaries)


def quantize(table: QuantizerTable, v: Any) -> np.ndarray:
    """
    Labels in [1, q]: 1 + number of boundaries at or below the value.

    A value equal to a cut point lands in the upper interval; values outside
    the calibration range clamp to the end intervals. Accepts (dim,) or
    (N, dim) input.
    """
    values = np.asarray(v, dtype=np.float64)
    if values.shape[-1] != table.dim:
        raise ArgumentError(f"feature length {values.shape[-1]} does not match quantizer dim {table.dim}")
    if np.isnan(values).any():
        raise ArgumentError("feature vector contains NaN")
    labels = np.sum(values[..., None] >= table.boundaries, axis=-1)
    return labels.astype(np.int64) + 1


def lssc_encode(labels: Any, q: int) -> BinaryTemplate:
    """Label k becomes (k-1) ones followed by (q-k) zeros; dimensions concatenated"""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 1 or labels.max() > q):
        raise ArgumentError(f"labels must lie in [1, {q}]")
    m = q - 1
    bits = (np.arange(m) < (labels[..., None] - 1)).astype(np.uint8)
    return BinaryTemplate(bits.reshape(labels.shape[:-1] + (labels.shape[-1] * m,)), "lssc")


def permute(t: BinaryTemplate, seed: int) -> BinaryTemplate:
    if t.stage != "lssc":
        raise ArgumentError(f"permute expects an lssc template, got {t.stage}")
    perm = prng.permutation(seed, len(t))
    return BinaryTemplate(t.bits[..., perm], "permuted")


def unpermute(t: BinaryTemplate, seed: int) -> BinaryTemplate:
    if t.stage != "permuted":
        raise ArgumentError(f"unpermute expects a permuted template, got {t.stage}")
    perm = prng.permutation(seed, len(t))
    bits = np.empty_like(t.bits)
    bits[..., perm] = t.bits
    return BinaryTemplate(bits, "lssc")


def gen_mask(kappa: float, seed: int, length: int) -> MaskBits:
    """Bit i is 1 iff u_i > kappa, u drawn from the seeded generator"""
    if not 0.0 <= kappa <= 1.0:
        raise ArgumentError(f"kappa must lie in [0, 1], got {kappa}")
    return MaskBits(prng.uniforms(seed, length) > kappa, kappa, seed)


def apply_mask(t: BinaryTemplate, r: MaskBits) -> BinaryTemplate:
    if len(t) != len(r):
        raise ArgumentError(f"template length {len(t)} does not match mask length {len(r)}")
    return BinaryTemplate(t.bits & r.bits, "masked")


def masked_distances(first: Any, second: Any, mask: Any) -> np.ndarray:
    """Fractional distances popcount((a xor b) and r) / length, row-wise"""
    first, second = as_bits(first), as_bits(second)
    diff = (first ^ second) & as_bits(mask)
    return diff.sum(axis=-1) / first.shape[-1]


def _exceed_rate(diff: np.ndarray, draws: np.ndarray, kappa: float, tau: float) -> float:
    distances = (diff & (draws > kappa)).sum(axis=1) / diff.shape[1]
    return float(np.mean(distances > tau))


def search_kappa(
    first: Any,
    second: Any,
    tau: float,
    quantile: float,
    mask_seed: int
) -> float:
    """
    Largest masking rate kappa keeping P(masked distance > tau) >= quantile.

    ``first``/``second`` are (P, L) permuted templates of inter-class pairs.
    Masks for every candidate threshold the same uniforms, so the exceed rate
    is non-increasing in kappa and bisection applies.
    """
    first, second = as_bits(first), as_bits(second)
    if first.shape != second.shape or first.ndim != 2 or first.shape[0] == 0:
        raise ArgumentError("search_kappa needs two equally shaped, non-empty (pairs, length) arrays")
    diff = first ^ second
    draws = prng.uniforms(mask_seed, diff.shape[1])
    unmasked = _exceed_rate(diff, draws, 0.0, tau)
    if unmasked < quantile:
        if unmasked < quantile - UNREACHABLE_SLACK:
            distances = diff.sum(axis=1) / diff.shape[1]
            raise UnreachableTauError(tau, (0.0, float(np.quantile(distances, 1.0 - quantile))))
        logger.warning(f"tau={tau} is only met by {unmasked:.4f} of pairs without masking; using kappa=0")
        return 0.0

    low, high = 0.0, 1.0
    for step in range(KAPPA_BISECTION_STEPS):
        mid = (low + high) / 2.0
        rate = _exceed_rate(diff, draws, mid, tau)
        logger.debug(f"kappa bisection {step}: kappa={mid:.6f} exceed rate={rate:.4f}")
        if rate >= quantile:
            low = mid
        else:
            high = mid
    logger.info(f"Masking rate kappa={low:.6f} keeps {_exceed_rate(diff, draws, low, tau):.4f} of pairs above tau={tau}")
    return low


def transform(v: Any, cfg: PipelineConfig, table: QuantizerTable) -> BinaryTemplate:
    """Quantize, LSSC-encode, permute and mask one (dim,) vector or an (N, dim) batch"""
    if table.q != cfg.q:
        raise ArgumentError(f"quantizer q={table.q} does not match pipeline q={cfg.q}")
    permuted = permute(lssc_encode(quantize(table, v), cfg.q), cfg.perm_seed)
    return apply_mask(permuted, gen_mask(cfg.kappa, cfg.mask_seed, len(permuted)))


def permuted_templates(v: Any, cfg: PipelineConfig, table: QuantizerTable) -> BinaryTemplate:
    return permute(lssc_encode(quantize(table, v), cfg.q), cfg.perm_seed)


def stage_distance_stats(
    reference: Any,
    probe: Any,
    labels_match: Any,
    cfg: PipelineConfig,
    table: QuantizerTable
) -> Dict[str, Dict[str, Optional[float]]]:
    """
    Mated/non-mated fractional distance moments at each pipeline stage.

    ``reference`` and ``probe`` are (T, dim) feature matrices of comparison
    trials; ``labels_match`` flags the mated ones.
    """
    matched = np.asarray(labels_match, dtype=bool)
    lssc_a = lssc_encode(quantize(table, reference), cfg.q)
    lssc_b = lssc_encode(quantize(table, probe), cfg.q)
    perm_a, perm_b = permute(lssc_a, cfg.perm_seed), permute(lssc_b, cfg.perm_seed)
    mask = gen_mask(cfg.kappa, cfg.mask_seed, len(perm_a))
    stages = {
        "lssc": (lssc_a.bits, lssc_b.bits),
        "permuted": (perm_a.bits, perm_b.bits),
        "masked": (apply_mask(perm_a, mask).bits, apply_mask(perm_b, mask).bits),
    }
    report: Dict[str, Dict[str, Optional[float]]] = {}
    for stage, (a, b) in stages.items():
        distances = (a != b).sum(axis=1) / a.shape[1]
        stats = ScoreStats(distances[matched], distances[~matched])
        entry: Dict[str, Optional[float]] = {
            "mated_mean": stats.mu_m if matched.any() else None,
            "mated_std": stats.sigma_m if matched.any() else None,
            "nonmated_mean": stats.mu_nm if (~matched).any() else None,
            "nonmated_std": stats.sigma_nm if (~matched).any() else None,
            "d_prime": None,
        }
        if matched.any() and (~matched).any():
            try:
                entry["d_prime"] = decidability(stats)
            except UndefinedResultError:
                pass
        report[stage] = entry
    return report


def _mated_pairs(labels: np.ndarray, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    _, groups = np.unique(labels, return_inverse=True)
    order = np.argsort(groups, kind="stable")
    bounds = np.flatnonzero(np.diff(groups[order])) + 1
    first, second = [], []
    for members in np.split(order, bounds):
        upper, lower = np.triu_indices(members.size, k=1)
        first.append(members[upper])
        second.append(members[lower])
    first, second = np.concatenate(first), np.concatenate(second)
    if first.size > count:
        chosen = prng.permutation(seed, first.size)[:count]
        first, second = first[chosen], second[chosen]
    return first, second


def _nonmated_pairs(labels: np.ndarray, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    first: List[np.ndarray] = []
    second: List[np.ndarray] = []
    found = 0
    for round_index in range(MAX_PAIR_ROUNDS):
        draws = prng.uniforms(seed, 16 * count, offset=16 * count * round_index)
        a = (draws[0::2] * labels.size).astype(np.int64)
        b = (draws[1::2] * labels.size).astype(np.int64)
        keep = labels[a] != labels[b]
        first.append(a[keep])
        second.append(b[keep])
        found += int(keep.sum())
        if found >= count:
            break
    return np.concatenate(first)[:count], np.concatenate(second)[:count]


def sample_pairs(
    labels: Any,
    count: int,
    seed: int,
    mated: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Up to ``count`` reproducible (first, second) row pairs of distinct rows
    with equal (mated) or different (non-mated) subject labels.

    Mated pairs are drawn without replacement from all same-label pairs, so
    fewer come back only when fewer exist. Non-mated pairs are drawn with
    replacement until ``count`` are found.
    """
    labels = np.asarray(labels)
    if labels.size < 2 or count < 1:
        raise ArgumentError("need at least two rows and a positive pair count")
    first, second = (_mated_pairs if mated else _nonmated_pairs)(labels, count, seed)
    if first.size == 0:
        raise ArgumentError(f"no {'mated' if mated else 'non-mated'} pairs available")
    if first.size < count:
        logger.warning(f"Only {first.size} of {count} requested {'mated' if mated else 'non-mated'} pairs exist")
    return first, second
