"""
Evaluation mathematics: retrieval curves, decidability, degrees of freedom
and entropy, sphere-packing / Gilbert-Varshamov strengths and the
unlinkability measures.

Strengths are reported in bits (log2 of a count).
"""
import math
from typing import Any, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from data.models import GmrFmrReport, LinkabilityReport, ScoreStats, SecurityReport, EntropyReport
from errors import ArgumentError, UndefinedResultError

LN2 = math.log(2.0)
MIN_BINS = 2


def gmr_fmr(mated: Any, nonmated: Any) -> GmrFmrReport:
    """
    Genuine and false match rates per iteration cap.

    ``mated``/``nonmated`` are (trials, I) boolean arrays: entry [t, i] says
    trial t had retrieved the key once i+1 iterations were allowed.
    """
    mated = np.asarray(mated, dtype=bool)
    nonmated = np.asarray(nonmated, dtype=bool)
    if mated.ndim != 2 or nonmated.ndim != 2 or mated.shape[0] == 0 or nonmated.shape[0] == 0:
        raise ArgumentError("gmr_fmr needs non-empty (trials, iterations) arrays for both hypotheses")
    if mated.shape[1] != nonmated.shape[1]:
        raise ArgumentError("mated and non-mated outcomes must cover the same iterations")
    return GmrFmrReport(mated.mean(axis=0), nonmated.mean(axis=0), mated.shape[0], nonmated.shape[0])


def decidability(stats: ScoreStats) -> float:
    """d' = |mu_m - mu_nm| / sqrt((sigma_m^2 + sigma_nm^2) / 2)"""
    pooled = 0.5 * (stats.sigma_m ** 2 + stats.sigma_nm ** 2)
    if pooled <= 0:
        raise UndefinedResultError("decidability is undefined for zero pooled variance")
    return abs(stats.mu_m - stats.mu_nm) / math.sqrt(pooled)


def binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def dof(e_hd: float, v_hd: float) -> float:
    """Degrees of freedom E(1-E)/V^2 of a fractional distance distribution (V is its std)"""
    if not 0.0 < e_hd < 1.0:
        raise ArgumentError(f"mean distance must lie in (0, 1), got {e_hd}")
    if v_hd <= 0:
        raise ArgumentError(f"distance spread must be positive, got {v_hd}")
    return e_hd * (1.0 - e_hd) / v_hd ** 2


def entropy_iid(degrees: float, e_hd: float) -> float:
    """DOF * h2(E) bits"""
    if degrees <= 0 or not 0.0 < e_hd < 1.0:
        raise ArgumentError("entropy needs positive DOF and mean distance in (0, 1)")
    return degrees * binary_entropy(e_hd)


def entropy_report(nonmated_scores: Any) -> EntropyReport:
    scores = np.asarray(nonmated_scores, dtype=np.float64)
    if scores.size < 2:
        raise ArgumentError("need at least two non-mated scores")
    e_hd, v_hd = float(scores.mean()), float(scores.std())
    degrees = dof(e_hd, v_hd)
    return EntropyReport(e_hd, v_hd, degrees, entropy_iid(degrees, e_hd))


def _log_binomials(total: int, upto: int) -> np.ndarray:
    i = np.arange(upto + 1)
    return gammaln(total + 1) - gammaln(i + 1) - gammaln(total - i + 1)


def sphere_packing_strength(entropy: float, t: int, approximate: bool = False) -> float:
    """
    log2(2^H / sum_{i<=t} C(H, i)) with H rounded to an integer.

    approximate=True keeps only the largest term C(H, t) of the sum.
    """
    total = int(round(entropy))
    if t < 0 or t > total:
        raise ArgumentError(f"tolerated bits must lie in [0, {total}], got {t}")
    logs = _log_binomials(total, t)
    log_ball = logs[-1] if approximate else logsumexp(logs)
    return total - float(log_ball) / LN2


def gv_strength(entropy: float, d: float) -> float:
    """H (1 - h2(d/H)) bits"""
    if entropy <= 0:
        raise ArgumentError(f"entropy must be positive, got {entropy}")
    ratio = d / entropy
    if ratio < 0 or ratio > 0.5:
        raise ArgumentError(f"d/H must lie in [0, 0.5], got {ratio:.4f}")
    return entropy * (1.0 - binary_entropy(ratio))


def gv_exact_strength(entropy: float, d: int) -> float:
    """log2(2^H / sum_{i<d} C(H, i)) with H rounded to an integer"""
    total = int(round(entropy))
    if d < 1 or d > total:
        raise ArgumentError(f"minimum distance must lie in [1, {total}], got {d}")
    return total - float(logsumexp(_log_binomials(total, d - 1))) / LN2


def system_strength(key_bits: float, s: float) -> float:
    return min(key_bits, s)


def tolerated_bits(rate: float, total_bits: int) -> int:
    """Correctable bits floor(rate * total_bits)"""
    if not 0.0 <= rate <= 1.0:
        raise ArgumentError(f"capability rate must lie in [0, 1], got {rate}")
    return int(math.floor(rate * total_bits + 1e-9))


def security_report(
    entropy: float,
    key_bits: int,
    t: Optional[int] = None,
    d: Optional[int] = None
) -> SecurityReport:
    """Both bounds side by side; H_sys uses sphere-packing when t is given, else GV"""
    if t is None and d is None:
        raise ArgumentError("security needs a tolerated error count t or a distance d")
    report = SecurityReport(key_bits=key_bits, entropy=entropy, t=t, d=d)
    if t is not None:
        report.s_sphere = sphere_packing_strength(entropy, t)
        report.s_sphere_approx = sphere_packing_strength(entropy, t, approximate=True)
    if d is not None:
        report.s_gv = gv_strength(entropy, d)
        report.s_gv_exact = gv_exact_strength(entropy, d) if d >= 1 else float(round(entropy))
    strength = report.s_sphere if report.s_sphere is not None else report.s_gv
    report.h_sys = system_strength(key_bits, strength)
    return report


def auto_bins(samples: int) -> int:
    """Histogram bins for ``samples`` scores per hypothesis: sqrt(samples) / 10, at least 2"""
    return max(MIN_BINS, int(round(math.sqrt(samples) / 10.0)))


def _bin_edges(scores: np.ndarray, bins: int, resolution: Optional[float]) -> np.ndarray:
    low, high = scores.min(), scores.max()
    if resolution is None:
        return np.histogram_bin_edges(scores, bins=bins, range=(low, high))
    # scores are multiples of resolution; edges sit halfway between lattice points
    first, last = int(round(low / resolution)), int(round(high / resolution))
    width = max(1, -(-(last - first + 1) // bins))
    return (first - 0.5 + width * np.arange(bins + 1)) * resolution


def unlinkability(
    mated: Any,
    nonmated: Any,
    bins: Optional[int] = None,
    omega: float = 1.0,
    resolution: Optional[float] = None
) -> LinkabilityReport:
    """
    Local D(s) and global D_sys linkability from histogram densities on a
    shared grid over the observed score range.

    D(s) = 0 where LR(s) * omega <= 1, else 2 LR omega / (1 + LR omega) - 1;
    bins with mated mass and no non-mated mass get D(s) = 1. Without ``bins``
    the count follows auto_bins() of the smaller sample. Scores on a lattice
    of step ``resolution`` get bins of whole lattice steps.
    """
    mated = np.asarray(mated, dtype=np.float64)
    nonmated = np.asarray(nonmated, dtype=np.float64)
    if mated.size == 0 or nonmated.size == 0:
        raise ArgumentError("unlinkability needs non-empty mated and non-mated score sets")
    bins = bins if bins is not None else auto_bins(min(mated.size, nonmated.size))
    if bins < 1 or omega <= 0:
        raise ArgumentError("bins must be positive and omega positive")
    if resolution is not None and resolution <= 0:
        raise ArgumentError(f"score resolution must be positive, got {resolution}")
    edges = _bin_edges(np.concatenate([mated, nonmated]), bins, resolution)
    p_mated = np.histogram(mated, bins=edges)[0] / mated.size
    p_nonmated = np.histogram(nonmated, bins=edges)[0] / nonmated.size

    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(p_nonmated > 0, p_mated / p_nonmated, np.inf)
        scaled = lr * omega
        d_local = np.where(scaled > 1, 2.0 * scaled / (1.0 + scaled) - 1.0, 0.0)
    d_local = np.where(np.isinf(scaled) & (p_mated > 0), 1.0, d_local)
    d_local = np.where(p_mated > 0, d_local, 0.0)
    d_sys = float(np.clip(np.sum(p_mated * d_local), 0.0, 1.0))
    centres = 0.5 * (edges[:-1] + edges[1:])
    return LinkabilityReport(centres, d_local, d_sys, omega)
