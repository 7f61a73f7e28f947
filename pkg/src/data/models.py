from typing import List, Dict, Optional, Any, Tuple

import numpy as np
from scipy import sparse

from errors import ArgumentError, ValidationError

FORMAT_VERSION = 1

DECODER_VARIANTS = ("sp", "ms", "nms", "oms", "neural")
PARAM_MODES = ("shared", "per-edge")
TEMPLATE_STAGES = ("lssc", "permuted", "masked")


def as_bits(values: Any) -> np.ndarray:
    """Coerce a bit sequence to a uint8 0/1 array"""
    bits = np.asarray(values)
    if bits.dtype == bool:
        return bits.astype(np.uint8)
    bits = bits.astype(np.uint8, copy=False)
    if bits.size and bits.max() > 1:
        raise ArgumentError("bit arrays may only hold 0 and 1")
    return bits


class BitVector:
    """Fixed-length bit string stored byte-packed, LSB-first within each byte"""
    def __init__(self, data: bytes, length: int):
        if length < 0 or len(data) != (length + 7) // 8:
            raise ValidationError(f"{len(data)} bytes cannot hold exactly {length} bits")
        if length % 8 and data[-1] >> (length % 8):
            raise ValidationError("trailing pad bits must be zero")
        self.data = bytes(data)
        self.length = length

    @classmethod
    def from_bits(cls, bits: Any) -> 'BitVector':
        bits = as_bits(bits).ravel()
        return cls(np.packbits(bits, bitorder="little").tobytes(), int(bits.size))

    @classmethod
    def from_hex(cls, text: str, length: int) -> 'BitVector':
        return cls(bytes.fromhex(text), length)

    @property
    def bits(self) -> np.ndarray:
        packed = np.frombuffer(self.data, dtype=np.uint8)
        return np.unpackbits(packed, count=self.length, bitorder="little")

    def to_hex(self) -> str:
        return self.data.hex()

    def popcount(self) -> int:
        return int(self.bits.sum())

    def __len__(self) -> int:
        return self.length

    def __xor__(self, other: 'BitVector') -> 'BitVector':
        if other.length != self.length:
            raise ArgumentError(f"cannot XOR {self.length} bits with {other.length} bits")
        return BitVector(bytes(a ^ b for a, b in zip(self.data, other.data)), self.length)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BitVector) and other.length == self.length and other.data == self.data

    def __hash__(self) -> int:
        return hash((self.length, self.data))

    def __repr__(self) -> str:
        return f"BitVector(length={self.length}, hex={self.to_hex()[:16]}...)"


class BaseGraph:
    """Protograph of a quasi-cyclic LDPC code: (row, col, shift) entries"""
    def __init__(
        self,
        rows: int,
        cols: int,
        entries: List[Tuple[int, int, int]],
        lifting_set_id: str = ""
    ):
        self.rows = rows
        self.cols = cols
        self.entries = [(int(r), int(c), int(s)) for r, c, s in entries]
        self.lifting_set_id = lifting_set_id
        self.validate()

    def validate(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValidationError(f"base graph dimensions must be positive, got {self.rows}x{self.cols}")
        seen = set()
        for row, col, shift in self.entries:
            if not (0 <= row < self.rows and 0 <= col < self.cols):
                raise ValidationError(f"entry ({row},{col}) outside {self.rows}x{self.cols}")
            if shift < 0:
                raise ValidationError(f"entry ({row},{col}) has negative shift {shift}")
            if (row, col) in seen:
                raise ValidationError(f"duplicate entry ({row},{col})")
            seen.add((row, col))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "lifting_set_id": self.lifting_set_id,
            "entries": [list(entry) for entry in self.entries]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BaseGraph':
        return cls(
            rows=data["rows"],
            cols=data["cols"],
            entries=[tuple(entry) for entry in data.get("entries", [])],
            lifting_set_id=data.get("lifting_set_id", "")
        )


class ParityCheck:
    """Sparse GF(2) parity-check matrix kept as per-check adjacency lists"""
    def __init__(self, n: int, rows_adj: List[Any]):
        self.n = n
        self.rows_adj = [np.asarray(sorted(int(v) for v in row), dtype=np.int64) for row in rows_adj]
        self.r = len(self.rows_adj)
        cols: List[List[int]] = [[] for _ in range(n)]
        for check, row in enumerate(self.rows_adj):
            if row.size and (row[0] < 0 or row[-1] >= n):
                raise ValidationError(f"check {check} references a variable outside [0, {n})")
            if row.size != np.unique(row).size:
                raise ValidationError(f"check {check} lists a variable twice")
            for var in row:
                cols[var].append(check)
        self.cols_adj = [np.asarray(col, dtype=np.int64) for col in cols]
        self._matrix: Optional[sparse.csr_matrix] = None

    @property
    def edge_count(self) -> int:
        return int(sum(row.size for row in self.rows_adj))

    @property
    def matrix(self) -> sparse.csr_matrix:
        """r x n CSR matrix of H (cached)"""
        if self._matrix is None:
            indptr = np.zeros(self.r + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([row.size for row in self.rows_adj])
            indices = np.concatenate(self.rows_adj) if self.r else np.zeros(0, dtype=np.int64)
            data = np.ones(indices.size, dtype=np.uint8)
            self._matrix = sparse.csr_matrix((data, indices, indptr), shape=(self.r, self.n))
        return self._matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray().astype(np.uint8)

    @classmethod
    def from_dense(cls, matrix: Any) -> 'ParityCheck':
        matrix = np.asarray(matrix) % 2
        return cls(matrix.shape[1], [np.nonzero(row)[0] for row in matrix])

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, ParityCheck)
            and other.n == self.n
            and other.r == self.r
            and all(np.array_equal(a, b) for a, b in zip(self.rows_adj, other.rows_adj))
        )

    __hash__ = object.__hash__


class GeneratorMatrix:
    """Systematic encoder: message bits sit verbatim at info_positions"""
    def __init__(
        self,
        n: int,
        info_positions: Any,
        parity_positions: Any,
        parity_rows: Any
    ):
        self.n = n
        self.info_positions = np.asarray(info_positions, dtype=np.int64)
        self.parity_positions = np.asarray(parity_positions, dtype=np.int64)
        self.parity_rows = as_bits(parity_rows).reshape(self.parity_positions.size, self.info_positions.size)
        self.k = int(self.info_positions.size)
        if self.k + self.parity_positions.size != n:
            raise ValidationError(f"{self.k} info + {self.parity_positions.size} parity positions != n={n}")
        if np.unique(np.concatenate([self.info_positions, self.parity_positions])).size != n:
            raise ValidationError("info and parity positions must partition the codeword")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": FORMAT_VERSION,
            "n": self.n,
            "k": self.k,
            "info_positions": self.info_positions.tolist(),
            "parity_positions": self.parity_positions.tolist(),
            "parity_rows_hex": [BitVector.from_bits(row).to_hex() for row in self.parity_rows]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GeneratorMatrix':
        k = int(data["k"])
        rows = [BitVector.from_hex(text, k).bits for text in data["parity_rows_hex"]]
        return cls(
            n=int(data["n"]),
            info_positions=data["info_positions"],
            parity_positions=data["parity_positions"],
            parity_rows=np.array(rows, dtype=np.uint8).reshape(len(rows), k)
        )


class TannerGraph:
    """Edge view of H; edge ids run row-major over the parity-check matrix"""
    def __init__(self, h: ParityCheck):
        self.n = h.n
        self.r = h.r
        degrees = np.array([row.size for row in h.rows_adj], dtype=np.int64)
        self.check_ptr = np.concatenate([[0], np.cumsum(degrees)]).astype(np.int64)
        self.edge_count = int(self.check_ptr[-1])
        self.check_of_edge = np.repeat(np.arange(self.r, dtype=np.int64), degrees)
        self.var_of_edge = (
            np.concatenate(h.rows_adj).astype(np.int64) if self.edge_count else np.zeros(0, dtype=np.int64)
        )
        self.var_edges = np.argsort(self.var_of_edge, kind="stable")
        var_degrees = np.bincount(self.var_of_edge, minlength=self.n)
        self.var_ptr = np.concatenate([[0], np.cumsum(var_degrees)]).astype(np.int64)
        self.check_degrees = degrees
        self.var_degrees = var_degrees

        # Padded (r, dmax) slot table; the pad slot points one past the last edge
        dmax = int(degrees.max()) if self.r else 0
        self.max_check_degree = dmax
        slots = np.full((self.r, dmax), self.edge_count, dtype=np.int64)
        offsets = np.arange(self.edge_count) - self.check_ptr[self.check_of_edge]
        slots[self.check_of_edge, offsets] = np.arange(self.edge_count)
        self.slots = slots
        self.slot_valid = np.flatnonzero(slots.ravel() < self.edge_count)

        # n x E incidence used for variable-node sums
        self.var_incidence = sparse.csr_matrix(
            (np.ones(self.edge_count), (self.var_of_edge, np.arange(self.edge_count))),
            shape=(self.n, self.edge_count)
        )

    def check_edges(self, check: int) -> np.ndarray:
        return np.arange(self.check_ptr[check], self.check_ptr[check + 1])

    def variable_edges(self, var: int) -> np.ndarray:
        return self.var_edges[self.var_ptr[var]:self.var_ptr[var + 1]]


class LdpcCode:
    """A parity-check matrix bundled with its encoder and a stable identifier"""
    def __init__(self, h: ParityCheck, g: GeneratorMatrix, code_id: str):
        if g.n != h.n:
            raise ValidationError(f"generator length {g.n} does not match H length {h.n}")
        self.h = h
        self.g = g
        self.code_id = code_id

    @property
    def n(self) -> int:
        return self.h.n

    @property
    def k(self) -> int:
        return self.g.k


class ChannelConfig:
    """Binary symmetric channel used to initialise LLRs"""
    def __init__(self, p: float):
        if not 0.0 < p < 0.5:
            raise ArgumentError(f"crossover probability must lie in (0, 0.5), got {p}")
        self.p = float(p)

    @property
    def llr_magnitude(self) -> float:
        return float(np.log((1.0 - self.p) / self.p))


class DecoderParams:
    """
    Check-node rule and per-iteration factors of a message-passing decoder.

    alpha/beta have shape (I,) in shared mode and (I, E) in per-edge mode;
    they are empty for sp and ms.
    """
    def __init__(
        self,
        variant: str,
        iterations: int,
        mode: str = "shared",
        alpha: Optional[Any] = None,
        beta: Optional[Any] = None
    ):
        if variant not in DECODER_VARIANTS:
            raise ArgumentError(f"unknown decoder variant '{variant}'")
        if mode not in PARAM_MODES:
            raise ArgumentError(f"unknown parameter mode '{mode}'")
        if iterations < 1:
            raise ArgumentError(f"iterations must be >= 1, got {iterations}")
        self.variant = variant
        self.iterations = int(iterations)
        self.mode = mode
        if variant in ("sp", "ms"):
            self.alpha = np.zeros(0)
            self.beta = np.zeros(0)
        else:
            self.alpha = np.array(alpha if alpha is not None else np.ones(iterations), dtype=np.float64)
            self.beta = np.array(beta if beta is not None else np.zeros(iterations), dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.variant in ("sp", "ms"):
            return
        if self.alpha.shape != self.beta.shape or self.alpha.shape[:1] != (self.iterations,):
            raise ValidationError(
                f"alpha {self.alpha.shape} and beta {self.beta.shape} must both lead with {self.iterations} iterations"
            )
        if (self.mode == "shared") != (self.alpha.ndim == 1):
            raise ValidationError(f"{self.mode} mode does not match factor shape {self.alpha.shape}")
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.beta))):
            raise ValidationError("decoder factors must be finite")
        if np.any(self.alpha <= 0):
            raise ValidationError("alpha factors must be positive")
        if np.any(self.beta < 0):
            raise ValidationError("beta factors must be non-negative")
        if self.variant == "nms" and np.any(self.beta != 0):
            raise ValidationError("normalized min-sum requires beta == 0")
        if self.variant == "oms" and np.any(self.alpha != 1):
            raise ValidationError("offset min-sum requires alpha == 1")

    @classmethod
    def classical(
        cls,
        variant: str,
        iterations: int,
        alpha: float = 1.0,
        beta: float = 0.0
    ) -> 'DecoderParams':
        """Constant factors across iterations (the handcrafted decoders)"""
        if variant == "nms":
            beta = 0.0
        elif variant == "oms":
            alpha = 1.0
        return cls(variant, iterations, "shared", np.full(iterations, alpha), np.full(iterations, beta))

    @property
    def parameter_count(self) -> int:
        return int(self.alpha.size + self.beta.size)

    def layer(self, index: int) -> Tuple[Any, Any]:
        """(alpha, beta) for 0-based iteration ``index``; scalars or per-edge arrays"""
        if self.variant in ("sp", "ms"):
            return 1.0, 0.0
        return self.alpha[index], self.beta[index]

    def truncated(self, iterations: int) -> 'DecoderParams':
        if iterations > self.iterations and self.variant not in ("sp", "ms"):
            raise ArgumentError(f"parameters cover {self.iterations} iterations, {iterations} requested")
        if self.variant in ("sp", "ms"):
            return DecoderParams(self.variant, iterations, self.mode)
        return DecoderParams(self.variant, iterations, self.mode, self.alpha[:iterations], self.beta[:iterations])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": FORMAT_VERSION,
            "variant": self.variant,
            "mode": self.mode,
            "iterations": self.iterations,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist()
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DecoderParams':
        variant = data["variant"]
        return cls(
            variant=variant,
            iterations=int(data["iterations"]),
            mode=data.get("mode", "shared"),
            alpha=data.get("alpha") if variant not in ("sp", "ms") else None,
            beta=data.get("beta") if variant not in ("sp", "ms") else None
        )

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, DecoderParams)
            and self.variant == other.variant
            and self.mode == other.mode
            and self.iterations == other.iterations
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.beta, other.beta)
        )

    __hash__ = object.__hash__


class DecodeResult:
    """Hard decisions of a decode run; fields are batched along axis 0 for batch runs"""
    def __init__(
        self,
        bits: np.ndarray,
        iterations_used: Any,
        converged: Any,
        per_iteration_bits: Optional[np.ndarray] = None
    ):
        self.bits = bits
        self.iterations_used = iterations_used
        self.converged = converged
        self.per_iteration_bits = per_iteration_bits


class TrainConfig:
    """Greedy layer-by-layer training settings"""
    def __init__(
        self,
        iterations: int,
        p_range: Tuple[float, float] = (0.13, 0.19),
        frames_per_epoch: int = 120,
        epochs_per_layer: int = 10,
        step_size: float = 0.05,
        momentum: float = 0.9,
        seed: int = 2024,
        mode: str = "shared",
        variant: str = "neural",
        decode_p: float = 0.17
    ):
        self.iterations = iterations
        self.p_range = (float(p_range[0]), float(p_range[1]))
        self.frames_per_epoch = frames_per_epoch
        self.epochs_per_layer = epochs_per_layer
        self.step_size = step_size
        self.momentum = momentum
        self.seed = seed
        self.mode = mode
        self.variant = variant
        self.decode_p = decode_p
        self.validate()

    def validate(self) -> None:
        low, high = self.p_range
        if not 0.0 < low <= high < 0.5:
            raise ArgumentError(f"training crossover range must lie inside (0, 0.5), got {self.p_range}")
        if self.iterations < 1 or self.frames_per_epoch < 1 or self.epochs_per_layer < 0:
            raise ArgumentError("iterations and frames per epoch must be positive, epochs non-negative")
        if self.step_size <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ArgumentError("step size must be positive and momentum in [0, 1)")
        if self.mode not in PARAM_MODES:
            raise ArgumentError(f"unknown parameter mode '{self.mode}'")
        if self.variant not in ("neural", "nms", "oms"):
            raise ArgumentError(f"variant '{self.variant}' has no trainable factors")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "p_range": list(self.p_range),
            "frames_per_epoch": self.frames_per_epoch,
            "epochs_per_layer": self.epochs_per_layer,
            "step_size": self.step_size,
            "momentum": self.momentum,
            "seed": self.seed,
            "mode": self.mode,
            "variant": self.variant,
            "decode_p": self.decode_p
        }


class QuantizerTable:
    """Per-dimension equally-probable interval boundaries"""
    def __init__(self, q: int, boundaries: Any):
        self.q = int(q)
        self.boundaries = np.asarray(boundaries, dtype=np.float64)
        if self.q < 2:
            raise ValidationError(f"q must be >= 2, got {q}")
        if self.boundaries.ndim != 2 or self.boundaries.shape[1] != self.q - 1:
            raise ValidationError(f"expected (dim, {self.q - 1}) boundaries, got {self.boundaries.shape}")
        if self.q > 2 and np.any(np.diff(self.boundaries, axis=1) <= 0):
            raise ValidationError("boundaries must be strictly increasing in every dimension")

    @property
    def dim(self) -> int:
        return int(self.boundaries.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": FORMAT_VERSION,
            "q": self.q,
            "boundaries": self.boundaries.tolist()
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'QuantizerTable':
        return cls(q=data["q"], boundaries=data["boundaries"])


class PipelineConfig:
    """Public transformation parameters shared by every user of a deployment"""
    def __init__(
        self,
        q: int,
        perm_seed: int,
        mask_seed: int,
        kappa: float = 0.0,
        tau: float = 0.235,
        quantile: float = 0.95,
        dim: int = 512
    ):
        if q < 2:
            raise ArgumentError(f"q must be >= 2, got {q}")
        if not 0.0 <= kappa <= 1.0:
            raise ArgumentError(f"kappa must lie in [0, 1], got {kappa}")
        if not 0.0 <= tau <= 1.0:
            raise ArgumentError(f"tau must lie in [0, 1], got {tau}")
        self.q = int(q)
        self.perm_seed = int(perm_seed)
        self.mask_seed = int(mask_seed)
        self.kappa = float(kappa)
        self.tau = float(tau)
        self.quantile = float(quantile)
        self.dim = int(dim)

    @property
    def m(self) -> int:
        return self.q - 1

    @property
    def template_length(self) -> int:
        return self.dim * self.m

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": FORMAT_VERSION,
            "q": self.q,
            "m": self.m,
            "perm_seed": self.perm_seed,
            "mask_seed": self.mask_seed,
            "kappa": self.kappa,
            "tau": self.tau,
            "quantile": self.quantile,
            "dim": self.dim,
            "prng": "splitmix64"
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PipelineConfig':
        return cls(
            q=data["q"],
            perm_seed=data["perm_seed"],
            mask_seed=data["mask_seed"],
            kappa=data.get("kappa", 0.0),
            tau=data.get("tau", 0.235),
            quantile=data.get("quantile", 0.95),
            dim=data.get("dim", 512)
        )


class BinaryTemplate:
    """Binary biometric representation tagged with the pipeline stage that produced it"""
    def __init__(self, bits: Any, stage: str):
        if stage not in TEMPLATE_STAGES:
            raise ArgumentError(f"unknown template stage '{stage}'")
        self.bits = as_bits(bits)
        self.stage = stage

    def __len__(self) -> int:
        return int(self.bits.shape[-1])

    def distance(self, other: 'BinaryTemplate') -> int:
        if len(other) != len(self):
            raise ArgumentError(f"template lengths differ: {len(self)} vs {len(other)}")
        return int(np.count_nonzero(self.bits != other.bits))


class MaskBits:
    """Public random mask; regenerated from (seed, kappa, length), never stored as bits"""
    def __init__(self, bits: Any, kappa: float, seed: int):
        self.bits = as_bits(bits)
        self.kappa = kappa
        self.seed = seed

    def __len__(self) -> int:
        return int(self.bits.size)


class SecretKey:
    """Key bound to the biometric; one block_bits subkey per code block"""
    def __init__(self, bits: Any, test_mode: bool = False, block_bits: int = 100):
        self.bits = as_bits(bits).ravel()
        if self.bits.size == 0 or self.bits.size % block_bits:
            raise ValidationError(f"key length must be a positive multiple of {block_bits}, got {self.bits.size}")
        self.test_mode = test_mode
        self.block_bits = block_bits

    @property
    def m(self) -> int:
        return self.bits.size // self.block_bits

    def packed(self) -> bytes:
        return BitVector.from_bits(self.bits).data


class Commitment:
    """Stored helper data: key hash, XOR difference and the pipeline/code it is bound to"""
    def __init__(
        self,
        key_hash: bytes,
        delta: BitVector,
        q: int,
        m: int,
        perm_seed: int,
        mask_seed: int,
        kappa: float,
        code_id: str,
        decoder_params_id: str = "",
        block_length: int = 520,
        hash_alg: str = "sha-256",
        version: int = FORMAT_VERSION
    ):
        if len(key_hash) != 32:
            raise ValidationError(f"key hash must be 32 bytes, got {len(key_hash)}")
        if len(delta) != m * block_length:
            raise ValidationError(f"delta holds {len(delta)} bits, expected {m * block_length}")
        self.key_hash = bytes(key_hash)
        self.delta = delta
        self.q = q
        self.m = m
        self.perm_seed = perm_seed
        self.mask_seed = mask_seed
        self.kappa = kappa
        self.code_id = code_id
        self.decoder_params_id = decoder_params_id
        self.block_length = block_length
        self.hash_alg = hash_alg
        self.version = version

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": self.version,
            "hash_alg": self.hash_alg,
            "key_hash_hex": self.key_hash.hex(),
            "delta_hex": self.delta.to_hex(),
            "q": self.q,
            "m": self.m,
            "perm_seed": self.perm_seed,
            "mask_seed": self.mask_seed,
            "kappa": self.kappa,
            "code_id": self.code_id,
            "decoder_params_id": self.decoder_params_id,
            "block_length": self.block_length
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Commitment':
        m = int(data["m"])
        block_length = int(data.get("block_length", 520))
        return cls(
            key_hash=bytes.fromhex(data["key_hash_hex"]),
            delta=BitVector.from_hex(data["delta_hex"], m * block_length),
            q=int(data["q"]),
            m=m,
            perm_seed=int(data["perm_seed"]),
            mask_seed=int(data["mask_seed"]),
            kappa=float(data["kappa"]),
            code_id=data["code_id"],
            decoder_params_id=data.get("decoder_params_id", ""),
            block_length=block_length,
            hash_alg=data.get("hash_alg", "sha-256"),
            version=int(data["version"])
        )


class RetrievalOutcome:
    """Result of key retrieval; a failed outcome never carries key bits"""
    def __init__(
        self,
        success: bool,
        key: Optional[SecretKey] = None,
        block_iterations: Optional[List[int]] = None,
        block_converged: Optional[List[bool]] = None
    ):
        self.success = success
        self.key = key if success else None
        self.block_iterations = block_iterations or []
        self.block_converged = block_converged or []

    def to_dict(self) -> Dict[str, Any]:
        """Diagnostics only; the key itself is never serialised"""
        return {
            "success": self.success,
            "block_iterations": list(self.block_iterations),
            "block_converged": list(self.block_converged)
        }


class FerReport:
    """Frame error rates of one decoder over a crossover sweep"""
    def __init__(
        self,
        decoder: str,
        iterations: int,
        seed: int,
        points: Optional[List[Dict[str, Any]]] = None,
        curves: Optional[Dict[float, List[int]]] = None
    ):
        self.decoder = decoder
        self.iterations = iterations
        self.seed = seed
        self.points = points or []
        self.curves = curves or {}

    def add_point(self, p: float, frames: int, errors: int) -> None:
        self.points.append({
            "p": p,
            "frames": frames,
            "errors": errors,
            "fer": errors / frames if frames else 0.0
        })

    def fer(self, p: float) -> float:
        for point in self.points:
            if point["p"] == p:
                return point["fer"]
        raise KeyError(p)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "decoder": self.decoder,
            "iterations": self.iterations,
            "seed": self.seed,
            "points": [dict(point) for point in self.points]
        }


class SynthConfig:
    """Settings of the calibrated-binomial synthetic population"""
    def __init__(
        self,
        subjects: int,
        samples_per_subject: int,
        length: int,
        p_m: float,
        p_nm: float,
        seed: int
    ):
        if subjects < 2 or samples_per_subject < 1 or length < 1:
            raise ArgumentError("need at least two subjects and positive sample count and length")
        if not 0.0 <= p_m < p_nm <= 0.5:
            raise ArgumentError(f"need 0 <= p_m < p_nm <= 0.5, got p_m={p_m}, p_nm={p_nm}")
        self.subjects = subjects
        self.samples_per_subject = samples_per_subject
        self.length = length
        self.p_m = p_m
        self.p_nm = p_nm
        self.seed = seed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subjects": self.subjects,
            "samples_per_subject": self.samples_per_subject,
            "length": self.length,
            "p_m": self.p_m,
            "p_nm": self.p_nm,
            "seed": self.seed
        }


class SynthPopulation:
    """Anchor templates with mated and non-mated probes, shapes (S, L) and (S, samples, L)"""
    def __init__(
        self,
        anchors: np.ndarray,
        mated: np.ndarray,
        nonmated: np.ndarray,
        config: Optional[SynthConfig] = None
    ):
        self.anchors = as_bits(anchors)
        self.mated = as_bits(mated)
        self.nonmated = as_bits(nonmated)
        self.config = config

    @property
    def subjects(self) -> int:
        return int(self.anchors.shape[0])

    def trials(self, role: str) -> Tuple[np.ndarray, np.ndarray]:
        """(reference, probe) template arrays for every mated or non-mated trial"""
        probes = self.mated if role == "mated" else self.nonmated
        samples = probes.shape[1]
        references = np.repeat(self.anchors, samples, axis=0)
        return references, probes.reshape(-1, probes.shape[-1])


class ScoreStats:
    """Mated and non-mated comparison scores with their moments"""
    def __init__(self, mated: Any, nonmated: Any):
        self.mated = np.asarray(mated, dtype=np.float64)
        self.nonmated = np.asarray(nonmated, dtype=np.float64)

    @property
    def mu_m(self) -> float:
        return float(self.mated.mean())

    @property
    def mu_nm(self) -> float:
        return float(self.nonmated.mean())

    @property
    def sigma_m(self) -> float:
        return float(self.mated.std())

    @property
    def sigma_nm(self) -> float:
        return float(self.nonmated.std())


class EntropyReport:
    """Degrees of freedom and i.i.d. entropy of the non-mated distance distribution"""
    def __init__(self, e_hd: float, v_hd: float, dof: float, entropy: float):
        self.e_hd = e_hd
        self.v_hd = v_hd
        self.dof = dof
        self.entropy = entropy

    def to_dict(self) -> Dict[str, Any]:
        return {"e_hd": self.e_hd, "v_hd": self.v_hd, "dof": self.dof, "H": self.entropy}


class SecurityReport:
    def __init__(
        self,
        key_bits: int,
        entropy: float,
        t: Optional[int] = None,
        d: Optional[int] = None,
        s_sphere: Optional[float] = None,
        s_sphere_approx: Optional[float] = None,
        s_gv: Optional[float] = None,
        s_gv_exact: Optional[float] = None,
        h_sys: float = 0.0
    ):
        self.key_bits = key_bits
        self.entropy = entropy
        self.t = t
        self.d = d
        self.s_sphere = s_sphere
        self.s_sphere_approx = s_sphere_approx
        self.s_gv = s_gv
        self.s_gv_exact = s_gv_exact
        self.h_sys = h_sys

    def to_dict(self) -> Dict[str, Any]:
        return {
            "key_bits": self.key_bits,
            "H": self.entropy,
            "t": self.t,
            "d": self.d,
            "s_sphere": self.s_sphere,
            "s_sphere_approx": self.s_sphere_approx,
            "s_gv": self.s_gv,
            "s_gv_exact": self.s_gv_exact,
            "h_sys": self.h_sys
        }


class GmrFmrReport:
    """Per-iteration genuine/false match rates of key retrieval"""
    def __init__(
        self,
        gmr: np.ndarray,
        fmr: np.ndarray,
        mated_trials: int,
        nonmated_trials: int
    ):
        self.gmr = np.asarray(gmr, dtype=np.float64)
        self.fmr = np.asarray(fmr, dtype=np.float64)
        self.mated_trials = mated_trials
        self.nonmated_trials = nonmated_trials

    @property
    def iterations(self) -> int:
        return int(self.gmr.size)

    @property
    def gmr_at_zero_fmr(self) -> Optional[float]:
        """Best GMR over iterations whose empirical FMR is exactly zero"""
        eligible = self.fmr == 0
        if not eligible.any():
            return None
        return float(self.gmr[eligible].max())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "gmr_final": float(self.gmr[-1]),
            "fmr_final": float(self.fmr[-1]),
            "gmr_at_zero_fmr": self.gmr_at_zero_fmr,
            "mated_trials": self.mated_trials,
            "nonmated_trials": self.nonmated_trials
        }


class LinkabilityReport:
    def __init__(
        self,
        grid: np.ndarray,
        d_local: np.ndarray,
        d_sys: float,
        omega: float = 1.0
    ):
        self.grid = grid
        self.d_local = d_local
        self.d_sys = d_sys
        self.omega = omega

    def to_dict(self) -> Dict[str, Any]:
        return {"d_sys": self.d_sys, "omega": self.omega, "bins": int(self.grid.size)}
