"""
Binary symmetric channel sampling, synthetic populations and Monte Carlo
frame-error-rate estimation.

Every frame owns a SplitMix64 stream derived from (seed, frame index): its
first k outputs give the message bits and the next n the channel uniforms.
A bit flips at rate p when its uniform is below p, so the same frame sees
nested flip patterns across a p sweep, and chunked or split runs reproduce
a serial run exactly.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri
from tqdm import tqdm

from config import FRAME_CHUNK
from data.models import BitVector, DecoderParams, FerReport, LdpcCode, SynthConfig, SynthPopulation, as_bits
from errors import ArgumentError
from services import prng
from services.decoder import channel_llr, decode_batch
from services.gf2_ldpc import encode_bits, extract_message

logger = logging.getLogger(__name__)


def bsc_flip(bits: Any, p: float, seed: int, stream: int) -> Any:
    """Flip each bit independently with probability p using stream ``stream`` of ``seed``"""
    if not 0.0 <= p <= 1.0:
        raise ArgumentError(f"crossover probability must lie in [0, 1], got {p}")
    is_vector = isinstance(bits, BitVector)
    values = bits.bits if is_vector else as_bits(bits)
    draws = prng.uniforms(prng.derive_seed(seed, stream), values.size).reshape(values.shape)
    flipped = values ^ (draws < p).astype(np.uint8)
    return BitVector.from_bits(flipped) if is_vector else flipped


def frame_draws(code: LdpcCode, seed: int, first: int, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Messages (count, k) and channel uniforms (count, n) of frames first..first+count-1"""
    messages = np.empty((count, code.k), dtype=np.uint8)
    noise = np.empty((count, code.n), dtype=np.float64)
    for row in range(count):
        stream = prng.derive_seed(seed, first + row)
        messages[row] = prng.random_bits(stream, code.k)
        noise[row] = prng.uniforms(stream, code.n, offset=code.k)
    return messages, noise


def _chunk_errors(
    code: LdpcCode,
    params: DecoderParams,
    p_list: Sequence[float],
    seed: int,
    first: int,
    count: int,
    iterations: int,
    decode_p: Optional[float],
    per_iteration: bool
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    messages, noise = frame_draws(code, seed, first, count)
    codewords = encode_bits(code.g, messages)
    errors = np.zeros(len(p_list), dtype=np.int64)
    curves = np.zeros((len(p_list), iterations), dtype=np.int64) if per_iteration else None
    for index, p in enumerate(p_list):
        received = codewords ^ (noise < p).astype(np.uint8)
        llr = channel_llr(received, decode_p if decode_p is not None else p)
        result = decode_batch(code.h, llr, params, snapshots=per_iteration, iterations=iterations)
        wrong = (extract_message(code.g, result.bits) != messages).any(axis=1)
        errors[index] = int(wrong.sum())
        if curves is not None:
            history = extract_message(code.g, result.per_iteration_bits)
            curves[index] = (history != messages[None]).any(axis=2).sum(axis=1)
    return errors, curves


def monte_carlo_fer(
    code: LdpcCode,
    params: DecoderParams,
    p_list: Sequence[float],
    frames: int,
    iterations: Optional[int] = None,
    seed: int = 0,
    decode_p: Optional[float] = None,
    workers: int = 1,
    chunk: int = FRAME_CHUNK,
    per_iteration: bool = False,
    frame_offset: int = 0,
    progress: bool = False
) -> FerReport:
    """
    Estimate FER at every crossover rate in ``p_list``.

    Frames ``frame_offset .. frame_offset+frames-1`` are simulated in chunks,
    optionally on a thread pool; chunk results are reduced in frame order.
    LLRs use ``decode_p`` when given, otherwise the true crossover rate.
    """
    if frames < 1:
        raise ArgumentError(f"frames must be >= 1, got {frames}")
    if decode_p is not None and not 0.0 < decode_p < 0.5:
        raise ArgumentError(f"decode-time crossover must lie in (0, 0.5), got {decode_p}")
    iterations = iterations or params.iterations
    p_list = [float(p) for p in p_list]
    starts = list(range(frame_offset, frame_offset + frames, chunk))
    sizes = [min(chunk, frame_offset + frames - start) for start in starts]

    def run(job: Tuple[int, int]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        return _chunk_errors(code, params, p_list, seed, job[0], job[1], iterations, decode_p, per_iteration)

    jobs = list(zip(starts, sizes))
    bar = tqdm(total=frames, desc=f"fer {params.variant}", unit="frame", disable=not progress)
    results = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for (_, size), result in zip(jobs, pool.map(run, jobs)):
            results.append(result)
            bar.update(size)
    bar.close()

    errors = np.sum([r[0] for r in results], axis=0)
    report = FerReport(params.variant, iterations, seed)
    for index, p in enumerate(p_list):
        report.add_point(p, frames, int(errors[index]))
        logger.info(f"{params.variant} p={p:.4f}: {int(errors[index])}/{frames} frame errors")
    if per_iteration:
        curves = np.sum([r[1] for r in results], axis=0)
        report.curves = {p: curves[index].tolist() for index, p in enumerate(p_list)}
    return report


def dedupe_grid(p_list: Sequence[float]) -> List[float]:
    """Drop repeated crossover rates, keeping first occurrences"""
    seen: List[float] = []
    for p in p_list:
        if p in seen:
            logger.warning(f"Duplicate crossover rate {p} removed from the sweep grid")
            continue
        seen.append(p)
    return seen


def anchor_spread(p_m: float, p_nm: float) -> float:
    """Per-bit rate at which anchors leave the centre so that two anchors differ at (p_nm - p_m) / (1 - 2 p_m)"""
    pair_rate = (p_nm - p_m) / (1.0 - 2.0 * p_m)
    return float(0.5 * (1.0 - np.sqrt(max(0.0, 1.0 - 2.0 * pair_rate))))


def synth_population(cfg: SynthConfig) -> SynthPopulation:
    """
    Calibrated-binomial stand-in for a biometric dataset.

    Anchors are a shared uniform centre with every bit flipped at the spread
    rate, and any sample of a subject is its anchor with bits flipped at p_m.
    Non-mated probe j of subject s is a sample of subject s+1 (mod S). Two
    anchors differ per bit with rate q = (p_nm - p_m) / (1 - 2 p_m), so a
    non-mated probe sits at distance rate p_nm from the reference anchor.
    """
    samples, length = cfg.samples_per_subject, cfg.length
    spread = anchor_spread(cfg.p_m, cfg.p_nm)
    centre = prng.random_bits(prng.derive_seed(cfg.seed, 0), length)
    bases = [prng.derive_seed(cfg.seed, 1 + subject) for subject in range(cfg.subjects)]
    anchors = np.stack([bsc_flip(centre, spread, base, 0) for base in bases])
    mated = np.empty((cfg.subjects, samples, length), dtype=np.uint8)
    nonmated = np.empty((cfg.subjects, samples, length), dtype=np.uint8)
    for subject, base in enumerate(bases):
        other = anchors[(subject + 1) % cfg.subjects]
        for sample in range(samples):
            mated[subject, sample] = bsc_flip(anchors[subject], cfg.p_m, base, 1 + sample)
            nonmated[subject, sample] = bsc_flip(other, cfg.p_m, base, 1 + samples + sample)
    return SynthPopulation(anchors, mated, nonmated, cfg)


def synth_embeddings(
    subjects: int,
    samples: int,
    dim: int,
    noise: float,
    seed: int
) -> Tuple[List[str], np.ndarray]:
    """
    Gaussian embedding population: subject centres ~ N(0, 1) per dimension,
    samples = centre + N(0, noise^2). Normals come from the project PRNG
    through the inverse normal CDF.
    """
    if subjects < 1 or samples < 1 or noise < 0:
        raise ArgumentError("subjects and samples must be positive and noise non-negative")
    ids: List[str] = []
    rows = []
    for subject in range(subjects):
        base = prng.derive_seed(seed, subject)
        centre = ndtri(_open_uniforms(base, dim, 0))
        for sample in range(samples):
            offset = dim * (1 + sample)
            rows.append(centre + noise * ndtri(_open_uniforms(base, dim, offset)))
            ids.append(f"s{subject:05d}")
    return ids, np.array(rows)


def _open_uniforms(seed: int, count: int, offset: int) -> np.ndarray:
    # shift into (0, 1) so the inverse CDF stays finite
    return prng.uniforms(seed, count, offset) + 2.0 ** -54
