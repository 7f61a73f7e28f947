import hashlib
import json
import logging
import os
from typing import Optional, Dict, List, Any, Tuple

import numpy as np
import pandas as pd

from config import BG2_ASSET, LIFTING_FACTOR
from data.models import (
    FORMAT_VERSION, BaseGraph, BitVector, Commitment, DecoderParams, GeneratorMatrix,
    LdpcCode, ParityCheck, PipelineConfig, QuantizerTable, SynthPopulation
)
from errors import ParseError, ValidationError, VersionError
from services import gf2_ldpc

logger = logging.getLogger(__name__)

# Loaded codes keyed by (path, z); ParityCheck/GeneratorMatrix are immutable
_codes: Dict[Tuple[str, int], LdpcCode] = {}


# ---------------------------------------------------------------------------
# Base graph CSV
# ---------------------------------------------------------------------------

def _int_fields(line: str, count: int, lineno: int) -> List[int]:
    fields = [field.strip() for field in line.split(",")]
    if len(fields) != count:
        raise ParseError(f"expected {count} comma-separated fields, got {len(fields)}", lineno)
    try:
        return [int(field) for field in fields]
    except ValueError:
        raise ParseError(f"non-integer field in '{line.strip()}'", lineno)


def load_base_graph(path: str) -> BaseGraph:
    """
    Load a base graph from CSV.

    The header line is ``rows,cols,lifting_set_id`` and every following
    non-blank line is a 0-based ``row,col,shift`` triple.
    """
    with open(path, "r", encoding="ascii") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise ParseError("empty base-graph file", 1)
    header = [field.strip() for field in lines[0].split(",")]
    if len(header) != 3:
        raise ParseError("header must be 'rows,cols,lifting_set_id'", 1)
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError("header dimensions must be integers", 1)
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        row, col, shift = _int_fields(line, 3, lineno)
        if not (0 <= row < rows and 0 <= col < cols):
            raise ValidationError(f"line {lineno}: entry ({row},{col}) outside {rows}x{cols}")
        entries.append((row, col, shift))
    return BaseGraph(rows, cols, entries, header[2])


# ---------------------------------------------------------------------------
# MacKay alist
# ---------------------------------------------------------------------------

def save_alist(h: ParityCheck, path: str) -> None:
    """Write H in MacKay alist format (1-based, zero-padded lists)"""
    col_degrees = [col.size for col in h.cols_adj]
    row_degrees = [row.size for row in h.rows_adj]
    max_col = max(col_degrees, default=0)
    max_row = max(row_degrees, default=0)

    def padded(values: np.ndarray, width: int) -> str:
        items = [str(int(v) + 1) for v in values] + ["0"] * (width - values.size)
        return " ".join(items)

    lines = [
        f"{h.n} {h.r}",
        f"{max_col} {max_row}",
        " ".join(str(d) for d in col_degrees),
        " ".join(str(d) for d in row_degrees),
    ]
    lines.extend(padded(col, max_col) for col in h.cols_adj)
    lines.extend(padded(row, max_row) for row in h.rows_adj)
    with open(path, "w", encoding="ascii") as handle:
        handle.write("\n".join(lines) + "\n")


def load_alist(path: str) -> ParityCheck:
    """Parse a MacKay alist file; column and row lists must agree"""
    with open(path, "r", encoding="ascii") as handle:
        raw = [(lineno, line.split()) for lineno, line in enumerate(handle.read().splitlines(), start=1)]
    lines = [(lineno, fields) for lineno, fields in raw if fields]

    def ints(index: int, expected: Optional[int] = None) -> Tuple[int, List[int]]:
        if index >= len(lines):
            raise ParseError("unexpected end of alist file", raw[-1][0] if raw else 1)
        lineno, fields = lines[index]
        try:
            values = [int(v) for v in fields]
        except ValueError:
            raise ParseError("non-integer token", lineno)
        if expected is not None and len(values) != expected:
            raise ParseError(f"expected {expected} values, got {len(values)}", lineno)
        return lineno, values

    _, (n, r) = ints(0, 2)
    lineno, (max_col, max_row) = ints(1, 2)
    _, col_degrees = ints(2, n)
    _, row_degrees = ints(3, r)
    if max(col_degrees, default=0) > max_col or max(row_degrees, default=0) > max_row:
        raise ParseError("declared maximum degree is below an actual degree", lineno)

    cols_adj = []
    for j in range(n):
        lineno, values = ints(4 + j)
        entries = [v - 1 for v in values if v != 0]
        if len(entries) != col_degrees[j]:
            raise ParseError(f"column {j} lists {len(entries)} checks, degree says {col_degrees[j]}", lineno)
        cols_adj.append(entries)
    rows_adj = []
    for i in range(r):
        lineno, values = ints(4 + n + i)
        entries = [v - 1 for v in values if v != 0]
        if len(entries) != row_degrees[i]:
            raise ParseError(f"row {i} lists {len(entries)} variables, degree says {row_degrees[i]}", lineno)
        if any(not 0 <= v < n for v in entries):
            raise ParseError(f"row {i} references a variable outside [1, {n}]", lineno)
        rows_adj.append(entries)

    h = ParityCheck(n, rows_adj)
    for j, entries in enumerate(cols_adj):
        if sorted(entries) != h.cols_adj[j].tolist():
            raise ParseError(f"column {j} list disagrees with the row lists")
    return h


# ---------------------------------------------------------------------------
# Versioned JSON records
# ---------------------------------------------------------------------------

def _write_json(data: Dict[str, Any], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _read_json(path: str, kind: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{kind} file is not valid JSON: {e.msg}", e.lineno)
    if not isinstance(data, dict):
        raise ParseError(f"{kind} file must hold a JSON object", 1)
    version = data.get("version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{kind} file has version {version!r}, expected {FORMAT_VERSION}")
    return data


def _from_record(factory: Any, data: Dict[str, Any], kind: str) -> Any:
    try:
        return factory(data)
    except (KeyError, TypeError) as e:
        raise ParseError(f"{kind} record is missing or mistypes a field: {e}")


def save_generator(g: GeneratorMatrix, path: str) -> None:
    _write_json(g.to_dict(), path)


def load_generator(path: str) -> GeneratorMatrix:
    return _from_record(GeneratorMatrix.from_dict, _read_json(path, "generator"), "generator")


def params_text(params: DecoderParams) -> str:
    return json.dumps(params.to_dict(), indent=2, sort_keys=True) + "\n"


def params_id(params: DecoderParams) -> str:
    """Stable identifier: variant, iteration count and a short digest of the canonical text"""
    digest = hashlib.sha256(params_text(params).encode("utf-8")).hexdigest()[:12]
    return f"{params.variant}-i{params.iterations}-{digest}"


def save_params(params: DecoderParams, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(params_text(params))


def load_params(path: str) -> DecoderParams:
    return _from_record(DecoderParams.from_dict, _read_json(path, "decoder parameter"), "decoder parameter")


def save_quantizer(table: QuantizerTable, path: str) -> None:
    _write_json(table.to_dict(), path)


def load_quantizer(path: str) -> QuantizerTable:
    return _from_record(QuantizerTable.from_dict, _read_json(path, "quantizer"), "quantizer")


def save_pipeline(cfg: PipelineConfig, path: str) -> None:
    _write_json(cfg.to_dict(), path)


def load_pipeline(path: str) -> PipelineConfig:
    return _from_record(PipelineConfig.from_dict, _read_json(path, "pipeline"), "pipeline")


def save_commitment(commitment: Commitment, path: str) -> None:
    _write_json(commitment.to_dict(), path)


def load_commitment(path: str) -> Commitment:
    return _from_record(Commitment.from_dict, _read_json(path, "commitment"), "commitment")


# ---------------------------------------------------------------------------
# Codes
# ---------------------------------------------------------------------------

def generator_sidecar(path: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + ".gen.json"


def init_code(path: Optional[str] = None, z: int = LIFTING_FACTOR) -> LdpcCode:
    """
    Build (or fetch from cache) the code described by ``path``.

    ``.alist`` files are used as-is (with a ``.gen.json`` sidecar when present);
    anything else is read as a base-graph CSV and lifted by ``z``.
    """
    path = path or BG2_ASSET
    key = (os.path.abspath(path), z)
    if key in _codes:
        return _codes[key]
    stem = os.path.splitext(os.path.basename(path))[0]
    if path.endswith(".alist"):
        h = load_alist(path)
        sidecar = generator_sidecar(path)
        g = load_generator(sidecar) if os.path.exists(sidecar) else gf2_ldpc.derive_generator(h)
        code_id = stem
    else:
        h = gf2_ldpc.lift(load_base_graph(path), z)
        g = gf2_ldpc.derive_generator(h)
        code_id = f"{stem}-z{z}"
    code = LdpcCode(h, g, code_id)
    _codes[key] = code
    logger.info(f"✅ Loaded code {code_id}: n={code.n} k={code.k} edges={h.edge_count}")
    return code


def get_code(path: Optional[str] = None, z: int = LIFTING_FACTOR) -> LdpcCode:
    """Get the code for ``path``, loading it on first use"""
    return init_code(path, z)


# ---------------------------------------------------------------------------
# Embeddings and populations (CSV via pandas)
# ---------------------------------------------------------------------------

def load_embeddings(path: str, dim: int = 512) -> Tuple[Optional[List[str]], np.ndarray]:
    """
    Read one feature vector per row.

    Rows hold ``dim`` floats, optionally preceded by a subject id column.
    """
    frame = pd.read_csv(path, header=None)
    if frame.shape[1] == dim + 1:
        subjects = frame.iloc[:, 0].astype(str).tolist()
        values = frame.iloc[:, 1:]
    elif frame.shape[1] == dim:
        subjects = None
        values = frame
    else:
        raise ParseError(f"embedding rows must have {dim} or {dim + 1} columns, got {frame.shape[1]}", 1)
    try:
        matrix = values.to_numpy(dtype=np.float64)
    except ValueError:
        raise ParseError("embedding values must be decimal numbers")
    if not np.all(np.isfinite(matrix)):
        bad = int(np.flatnonzero(~np.isfinite(matrix).all(axis=1))[0])
        raise ParseError("embedding holds a non-finite value", bad + 1)
    return subjects, matrix


def save_embeddings(subjects: Optional[List[str]], matrix: np.ndarray, path: str) -> None:
    frame = pd.DataFrame(matrix)
    if subjects is not None:
        frame.insert(0, "subject", subjects)
    frame.to_csv(path, header=False, index=False, float_format="%.9g")


def save_population(population: SynthPopulation, path: str) -> None:
    """One row per template: subject, role (anchor/mated/nonmated), sample, bits_hex"""
    rows = []
    for subject in range(population.subjects):
        rows.append((subject, "anchor", 0, BitVector.from_bits(population.anchors[subject]).to_hex()))
        for role, probes in (("mated", population.mated), ("nonmated", population.nonmated)):
            for sample, bits in enumerate(probes[subject]):
                rows.append((subject, role, sample, BitVector.from_bits(bits).to_hex()))
    frame = pd.DataFrame(rows, columns=["subject", "role", "sample", "bits_hex"])
    with open(path, "w", encoding="ascii", newline="") as handle:
        handle.write(f"# length={population.anchors.shape[1]}\n")
        frame.to_csv(handle, index=False)


def load_population(path: str) -> SynthPopulation:
    with open(path, "r", encoding="ascii") as handle:
        first = handle.readline().strip()
        if not first.startswith("# length="):
            raise ParseError("population file must start with '# length=N'", 1)
        try:
            length = int(first.split("=", 1)[1])
        except ValueError:
            raise ParseError("template length must be an integer", 1)
        frame = pd.read_csv(handle, dtype={"bits_hex": str})
    missing = {"subject", "role", "sample", "bits_hex"} - set(frame.columns)
    if missing:
        raise ParseError(f"population file lacks columns {sorted(missing)}", 2)
    frame = frame.sort_values(["subject", "role", "sample"], kind="stable")
    subjects = sorted(frame["subject"].unique())

    def decode(text: str) -> np.ndarray:
        return BitVector.from_hex(text, length).bits

    anchors, mated, nonmated = [], [], []
    for subject in subjects:
        rows = frame[frame["subject"] == subject]
        anchor = rows[rows["role"] == "anchor"]["bits_hex"].tolist()
        if len(anchor) != 1:
            raise ValidationError(f"subject {subject} must have exactly one anchor")
        anchors.append(decode(anchor[0]))
        mated.append([decode(text) for text in rows[rows["role"] == "mated"]["bits_hex"]])
        nonmated.append([decode(text) for text in rows[rows["role"] == "nonmated"]["bits_hex"]])
    try:
        return SynthPopulation(np.array(anchors), np.array(mated), np.array(nonmated))
    except ValueError:
        raise ValidationError("every subject needs the same number of mated and non-mated samples")


def load_scores(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Scores CSV with columns ``label,score``; label is mated or nonmated"""
    frame = pd.read_csv(path)
    if not {"label", "score"} <= set(frame.columns):
        raise ParseError("scores file needs 'label' and 'score' columns", 1)
    labels = frame["label"].astype(str).str.strip().str.lower()
    unknown = set(labels) - {"mated", "nonmated"}
    if unknown:
        raise ValidationError(f"unknown score labels {sorted(unknown)}")
    scores = frame["score"].astype(float).to_numpy()
    return scores[(labels == "mated").to_numpy()], scores[(labels == "nonmated").to_numpy()]
