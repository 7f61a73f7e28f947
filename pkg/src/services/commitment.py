"""
Fuzzy commitment over an LDPC code.

Enrollment binds a random key to a masked template: the template is split
into m feature blocks, each block zero-padded to the code length and XORed
with the codeword of one subkey. Retrieval XORs a probe back onto the
stored difference, decodes every block and accepts the concatenated key
only if its SHA-256 digest matches the stored one.
"""
import hashlib
import logging
import secrets
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config import DECODE_P
from data.models import (
    BinaryTemplate, BitVector, Commitment, DecoderParams, LdpcCode, PipelineConfig,
    RetrievalOutcome, SecretKey, as_bits
)
from errors import ArgumentError, EntropyError, MetadataMismatchError
from services import prng
from services.decoder import channel_llr, decode_batch
from services.gf2_ldpc import encode_bits, extract_message, is_codeword

logger = logging.getLogger(__name__)

HASH_ALG = "sha-256"
FEATURE_BLOCK = 512
TRIAL_CHUNK = 64


def generate_key(m: int, test_seed: Optional[int] = None, block_bits: int = 100) -> SecretKey:
    """
    Draw m * block_bits key bits.

    Keys come from the OS CSPRNG unless ``test_seed`` is given, in which case
    the project PRNG makes them reproducible and the key is flagged test_mode.
    """
    if m < 1:
        raise ArgumentError(f"m must be >= 1, got {m}")
    length = m * block_bits
    if test_seed is not None:
        return SecretKey(prng.random_bits(test_seed, length), test_mode=True, block_bits=block_bits)
    try:
        raw = secrets.token_bytes((length + 7) // 8)
    except (OSError, NotImplementedError) as e:
        raise EntropyError(f"entropy source failed: {e}")
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=length, bitorder="little")
    return SecretKey(bits, block_bits=block_bits)


def key_digest(bits: Any) -> bytes:
    """SHA-256 of the key bits packed LSB-first"""
    return hashlib.sha256(BitVector.from_bits(bits).data).digest()


def split_and_pad(t: Any, m: int, block_length: int = 520) -> np.ndarray:
    """
    Cut a 512*m-bit template into m blocks and zero-pad each to block_length.

    Accepts a BinaryTemplate or raw bits; a (T, 512*m) batch gives (T, m, block_length).
    """
    bits = t.bits if isinstance(t, BinaryTemplate) else as_bits(t)
    if bits.shape[-1] != FEATURE_BLOCK * m:
        raise ArgumentError(f"template length {bits.shape[-1]} != {FEATURE_BLOCK}*m = {FEATURE_BLOCK * m}")
    if block_length < FEATURE_BLOCK:
        raise ArgumentError(f"code length {block_length} cannot hold a {FEATURE_BLOCK}-bit feature block")
    blocks = np.zeros(bits.shape[:-1] + (m, block_length), dtype=np.uint8)
    blocks[..., :FEATURE_BLOCK] = bits.reshape(bits.shape[:-1] + (m, FEATURE_BLOCK))
    return blocks


def join_blocks(blocks: Any) -> np.ndarray:
    """Inverse of split_and_pad: drop the pads and concatenate"""
    blocks = as_bits(blocks)
    feature = blocks[..., :FEATURE_BLOCK]
    return feature.reshape(feature.shape[:-2] + (feature.shape[-2] * FEATURE_BLOCK,))


def _check_template(t: BinaryTemplate, m: int) -> None:
    if t.stage != "masked":
        raise ArgumentError(f"commitments bind masked templates, got a {t.stage} template")
    if len(t) != FEATURE_BLOCK * m:
        raise ArgumentError(f"template length {len(t)} != {FEATURE_BLOCK}*m = {FEATURE_BLOCK * m}")


def commit_bits(templates: Any, keys: Any, code: LdpcCode, m: int) -> np.ndarray:
    """delta = padded feature blocks XOR codewords, for (..., 512m) templates and (..., km) keys"""
    keys = as_bits(keys)
    if keys.shape[-1] != m * code.k:
        raise ArgumentError(f"key length {keys.shape[-1]} != m*k = {m * code.k}")
    blocks = split_and_pad(templates, m, code.n)
    codewords = encode_bits(code.g, keys.reshape(keys.shape[:-1] + (m, code.k)))
    delta = blocks ^ codewords
    return delta.reshape(delta.shape[:-2] + (m * code.n,))


def enroll(
    t: BinaryTemplate,
    key: SecretKey,
    code: LdpcCode,
    cfg: PipelineConfig,
    params_id: str = ""
) -> Commitment:
    m = cfg.m
    _check_template(t, m)
    if key.m != m or key.block_bits != code.k:
        raise ArgumentError(f"key of {key.bits.size} bits does not fit {m} blocks of k={code.k}")
    delta = commit_bits(t.bits, key.bits, code, m)
    if key.test_mode:
        logger.warning("Enrolling with a test-mode key; do not use this commitment in production")
    return Commitment(
        key_hash=key_digest(key.bits),
        delta=BitVector.from_bits(delta),
        q=cfg.q,
        m=m,
        perm_seed=cfg.perm_seed,
        mask_seed=cfg.mask_seed,
        kappa=cfg.kappa,
        code_id=code.code_id,
        decoder_params_id=params_id,
        block_length=code.n,
        hash_alg=HASH_ALG
    )


def check_metadata(commitment: Commitment, code: LdpcCode, cfg: PipelineConfig) -> None:
    """Refuse probes produced by a different pipeline or code"""
    mismatches = []
    for name, stored, current in (
        ("q", commitment.q, cfg.q),
        ("m", commitment.m, cfg.m),
        ("perm_seed", commitment.perm_seed, cfg.perm_seed),
        ("mask_seed", commitment.mask_seed, cfg.mask_seed),
        ("kappa", commitment.kappa, cfg.kappa),
        ("code_id", commitment.code_id, code.code_id),
        ("block_length", commitment.block_length, code.n),
        ("hash_alg", commitment.hash_alg, HASH_ALG),
    ):
        if stored != current:
            mismatches.append(f"{name} (commitment {stored!r}, current {current!r})")
    if mismatches:
        raise MetadataMismatchError("commitment metadata mismatch: " + ", ".join(mismatches))


def retrieve(
    probe: BinaryTemplate,
    commitment: Commitment,
    code: LdpcCode,
    params: DecoderParams,
    cfg: PipelineConfig,
    decode_p: float = DECODE_P,
    iterations: Optional[int] = None
) -> RetrievalOutcome:
    """
    Decode every block of probe XOR delta and verify the concatenated key.

    A metadata mismatch raises. A block that does not converge or a digest
    mismatch returns an unsuccessful outcome without key bits.
    """
    check_metadata(commitment, code, cfg)
    _check_template(probe, commitment.m)
    noisy = split_and_pad(probe.bits, commitment.m, code.n) ^ commitment.delta.bits.reshape(commitment.m, code.n)
    result = decode_batch(code.h, channel_llr(noisy, decode_p), params, iterations=iterations)
    key_bits = extract_message(code.g, result.bits).ravel()
    block_iterations = [int(v) for v in result.iterations_used]
    block_converged = [bool(v) for v in result.converged]
    if not all(block_converged) or key_digest(key_bits) != commitment.key_hash:
        logger.info(f"❌ Key retrieval failed (converged blocks: {sum(block_converged)}/{commitment.m})")
        return RetrievalOutcome(False, None, block_iterations, block_converged)
    logger.info(f"✅ Key retrieved after {max(block_iterations)} iterations")
    return RetrievalOutcome(True, SecretKey(key_bits, block_bits=code.k), block_iterations, block_converged)


def _chunk_curves(
    probes: np.ndarray,
    deltas: np.ndarray,
    key_hashes: Sequence[bytes],
    code: LdpcCode,
    params: DecoderParams,
    m: int,
    decode_p: float,
    iterations: int
) -> np.ndarray:
    count = probes.shape[0]
    noisy = split_and_pad(probes, m, code.n) ^ deltas.reshape(count, m, code.n)
    llr = channel_llr(noisy.reshape(count * m, code.n), decode_p)
    result = decode_batch(code.h, llr, params, snapshots=True, iterations=iterations)
    keys = result.per_iteration_bits[..., code.g.info_positions].reshape(iterations, count, m * code.k)
    valid = is_codeword(code.h, result.per_iteration_bits).reshape(iterations, count, m).all(axis=2)

    matches = np.zeros((count, iterations), dtype=bool)
    for index in range(iterations):
        if index:
            changed = (keys[index] != keys[index - 1]).any(axis=1)
            matches[:, index] = matches[:, index - 1]
        else:
            changed = np.ones(count, dtype=bool)
        for trial in np.flatnonzero(changed):
            matches[trial, index] = key_digest(keys[index, trial]) == key_hashes[trial]
    return matches & valid.T


def retrieval_curves(
    probes: Any,
    deltas: Any,
    key_hashes: Sequence[bytes],
    code: LdpcCode,
    params: DecoderParams,
    m: int,
    decode_p: float = DECODE_P,
    iterations: Optional[int] = None,
    chunk: int = TRIAL_CHUNK,
    progress: bool = False
) -> np.ndarray:
    """
    Retrieval success of many trials at every iteration cap.

    ``probes`` are (T, 512m) masked templates and ``deltas`` (T, m*n) stored
    differences. Returns a (T, I) boolean array; entry [t, i] is True when
    trial t recovers its key once i+1 iterations are allowed.
    """
    probes, deltas = as_bits(probes), as_bits(deltas)
    if probes.shape[0] != deltas.shape[0] or len(key_hashes) != probes.shape[0]:
        raise ArgumentError("probes, deltas and key hashes must cover the same trials")
    iterations = iterations or params.iterations
    curves: List[np.ndarray] = []
    for first in tqdm(range(0, probes.shape[0], chunk), desc="retrieve", unit="chunk", disable=not progress):
        last = first + chunk
        curves.append(_chunk_curves(
            probes[first:last], deltas[first:last], key_hashes[first:last],
            code, params, m, decode_p, iterations
        ))
    if not curves:
        return np.zeros((0, iterations), dtype=bool)
    return np.concatenate(curves)


def enroll_many(
    references: Any,
    code: LdpcCode,
    m: int,
    key_seed: int
) -> Tuple[np.ndarray, List[bytes]]:
    """
    Commit (T, 512m) reference templates under reproducible test keys.

    Trial t uses the key drawn from stream t of ``key_seed``.
    """
    references = as_bits(references)
    keys = np.stack([
        prng.random_bits(prng.derive_seed(key_seed, trial), m * code.k)
        for trial in range(references.shape[0])
    ]) if references.shape[0] else np.zeros((0, m * code.k), dtype=np.uint8)
    deltas = commit_bits(references, keys, code, m)
    return deltas, [key_digest(key) for key in keys]
