"""
One handler per CLI subcommand. Each takes the resolved RunConfig and
returns a process exit code; errors propagate to handlers.error_handlers.
"""
import json
import logging
import os
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from config import (
    BG2_ASSET, DECODE_P, DEFAULT_FRAMES, DEFAULT_ITERATIONS, DEFAULT_Q, DEFAULT_SEED,
    DEFAULT_TAU, FEATURE_DIM, FRAME_CHUNK, KAPPA_QUANTILE, LIFTING_FACTOR, MASK_SEED,
    NMS_ALPHA, OMS_BETA, PERM_SEED, PROGRESS, SYNTH_P_M, SYNTH_P_NM, TRAIN_EPOCHS_PER_LAYER,
    TRAIN_FRAMES_PER_EPOCH, TRAIN_MOMENTUM, TRAIN_P_HIGH, TRAIN_P_LOW, TRAIN_STEP_SIZE, WORKERS
)
from data import storage
from data.models import (
    BinaryTemplate, DecoderParams, EntropyReport, LdpcCode, PipelineConfig, QuantizerTable, ScoreStats,
    SynthConfig, TrainConfig
)
from errors import ArgumentError, ParseError, UndefinedResultError
from handlers.error_handlers import EXIT_OK, EXIT_REJECTED
from services import commitment, feature_pipeline, metrics, prng, simulation, training
from utils import (
    fer_curve_frame, fer_frame, gmr_fmr_frame, linkability_frame, parse_grid, write_frame, write_json
)

logger = logging.getLogger(__name__)

# Settings every command can read; flags > --config file > environment > these
DEFAULTS: Dict[str, Any] = {
    "seed": DEFAULT_SEED,
    "code": BG2_ASSET,
    "z": LIFTING_FACTOR,
    "iters": DEFAULT_ITERATIONS,
    "frames": DEFAULT_FRAMES,
    "decode_p": DECODE_P,
    "channel_llr": False,
    "decoder": None,
    "params": None,
    "p": None,
    "p_grid": None,
    "q": DEFAULT_Q,
    "tau": DEFAULT_TAU,
    "kappa_quantile": KAPPA_QUANTILE,
    "perm_seed": PERM_SEED,
    "mask_seed": MASK_SEED,
    "m": None,
    "workers": WORKERS,
    "chunk": FRAME_CHUNK,
    "progress": PROGRESS,
    "nms_alpha": NMS_ALPHA,
    "oms_beta": OMS_BETA,
    "variant": "neural",
    "mode": "shared",
    "p_low": TRAIN_P_LOW,
    "p_high": TRAIN_P_HIGH,
    "frames_per_epoch": TRAIN_FRAMES_PER_EPOCH,
    "epochs": TRAIN_EPOCHS_PER_LAYER,
    "step_size": TRAIN_STEP_SIZE,
    "momentum": TRAIN_MOMENTUM,
    "embeddings": None,
    "row": 0,
    "pipeline": None,
    "quantizer": None,
    "commitment": None,
    "population": None,
    "test_key_seed": None,
    "pairs": 2000,
    "trials": None,
    "keys_per_subject": 2,
    "bins": None,
    "omega": 1.0,
    "scores": None,
    "e_hd": None,
    "v_hd": None,
    "t": None,
    "d": None,
    "capability_rate": None,
    "kind": "binary",
    "subjects": 100,
    "samples": 10,
    "length": None,
    "p_m": SYNTH_P_M,
    "p_nm": SYNTH_P_NM,
    "noise": 0.5,
    "out": None,
    "report_out": None,
    "curve_out": None,
    "quantizer_out": None,
    "per_iteration_out": None,
}


class RunConfig:
    """Resolved settings of one CLI invocation"""
    def __init__(self, command: str, settings: Dict[str, Any], explicit: Optional[set] = None):
        self.command = command
        self.settings = settings
        self.explicit = explicit or set()

    def __getattr__(self, name: str) -> Any:
        settings = self.__dict__.get("settings", {})
        if name in settings:
            return settings[name]
        raise AttributeError(name)

    def is_set(self, name: str) -> bool:
        """True when the setting came from a flag or the config file"""
        return name in self.explicit

    @classmethod
    def resolve(
        cls,
        command: str,
        flags: Dict[str, Any],
        config_path: Optional[str] = None
    ) -> 'RunConfig':
        from_file: Dict[str, Any] = {}
        if config_path:
            with open(config_path, "r", encoding="utf-8") as handle:
                try:
                    from_file = json.load(handle)
                except json.JSONDecodeError as e:
                    raise ParseError(f"config file is not valid JSON: {e.msg}", e.lineno)
            if not isinstance(from_file, dict):
                raise ParseError("config file must hold a JSON object", 1)
            unknown = set(from_file) - set(DEFAULTS)
            if unknown:
                raise ArgumentError(f"unknown config keys {sorted(unknown)}")
        settings = dict(DEFAULTS)
        settings.update(from_file)
        explicit = set(from_file)
        for name, value in flags.items():
            if name in DEFAULTS and value is not None:
                settings[name] = value
                explicit.add(name)
        return cls(command, settings, explicit)

    def to_dict(self) -> Dict[str, Any]:
        return {"command": self.command, **self.settings}


# ---------------------------------------------------------------------------
# Shared loading helpers
# ---------------------------------------------------------------------------

def _require(cfg: RunConfig, *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if cfg.settings.get(name) is None]
    if missing:
        raise ArgumentError(f"{cfg.command} needs {', '.join(missing)}")


def _code(cfg: RunConfig) -> LdpcCode:
    return storage.get_code(cfg.code, cfg.z)


def _classical(variant: str, iterations: int, cfg: RunConfig) -> DecoderParams:
    if variant == "neural":
        raise ArgumentError("the neural decoder needs trained parameters (--params)")
    return DecoderParams.classical(variant, iterations, alpha=cfg.nms_alpha, beta=cfg.oms_beta)


def _decoders(cfg: RunConfig) -> List[DecoderParams]:
    """Decoders named by --decoder (comma list) and/or loaded from --params"""
    loaded = storage.load_params(cfg.params) if cfg.params else None
    variants = [v.strip() for v in cfg.decoder.split(",") if v.strip()] if cfg.decoder else []
    if not variants:
        variants = [loaded.variant] if loaded is not None else ["ms"]

    decoders = []
    for variant in variants:
        if loaded is not None and loaded.variant == variant:
            iterations = cfg.iters if cfg.is_set("iters") else loaded.iterations
            decoders.append(loaded.truncated(iterations) if iterations != loaded.iterations else loaded)
        else:
            decoders.append(_classical(variant, cfg.iters, cfg))
    return decoders


def _decoder(cfg: RunConfig) -> DecoderParams:
    decoders = _decoders(cfg)
    if len(decoders) != 1:
        raise ArgumentError(f"{cfg.command} takes a single decoder, got {len(decoders)}")
    return decoders[0]


def _pipeline(cfg: RunConfig) -> Tuple[PipelineConfig, QuantizerTable]:
    _require(cfg, "pipeline", "quantizer")
    pipeline = storage.load_pipeline(cfg.pipeline)
    table = storage.load_quantizer(cfg.quantizer)
    if cfg.m is not None and cfg.m != pipeline.m:
        raise ArgumentError(f"--m {cfg.m} does not match the pipeline's m={pipeline.m}")
    return pipeline, table


def _probe_template(cfg: RunConfig, pipeline: PipelineConfig, table: QuantizerTable) -> BinaryTemplate:
    _require(cfg, "embeddings")
    _, matrix = storage.load_embeddings(cfg.embeddings, pipeline.dim)
    if not 0 <= cfg.row < matrix.shape[0]:
        raise ArgumentError(f"row {cfg.row} outside the {matrix.shape[0]} embedding rows")
    return feature_pipeline.transform(matrix[cfg.row], pipeline, table)


def _blocks_of(length: int) -> int:
    if length % commitment.FEATURE_BLOCK:
        raise ArgumentError(f"template length {length} is not a multiple of {commitment.FEATURE_BLOCK}")
    return length // commitment.FEATURE_BLOCK


def _fractional_distances(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    return (first != second).sum(axis=1) / first.shape[1]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_build_code(cfg: RunConfig) -> int:
    code = _code(cfg)
    if cfg.out:
        storage.save_alist(code.h, cfg.out)
        sidecar = storage.generator_sidecar(cfg.out)
        storage.save_generator(code.g, sidecar)
        logger.info(f"Wrote {cfg.out} and {sidecar}")
    print(f"n={code.n} k={code.k} r={code.h.r} edges={code.h.edge_count}")
    return EXIT_OK


def cmd_fer(cfg: RunConfig) -> int:
    if cfg.p is None and cfg.p_grid is None:
        raise ArgumentError("fer needs --p or --p-grid")
    grid = [cfg.p] if cfg.p is not None else parse_grid(cfg.p_grid)
    grid = simulation.dedupe_grid(grid)
    code = _code(cfg)
    per_iteration = cfg.per_iteration_out is not None

    reports = []
    for params in _decoders(cfg):
        reports.append(simulation.monte_carlo_fer(
            code, params, grid, cfg.frames,
            seed=cfg.seed,
            decode_p=None if cfg.channel_llr else cfg.decode_p,
            workers=cfg.workers,
            chunk=cfg.chunk,
            per_iteration=per_iteration,
            progress=cfg.progress
        ))
    write_frame(fer_frame(reports), cfg.out)
    if per_iteration:
        write_frame(fer_curve_frame(reports), cfg.per_iteration_out)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    code = _code(cfg)
    train_cfg = TrainConfig(
        iterations=cfg.iters,
        p_range=(cfg.p_low, cfg.p_high),
        frames_per_epoch=cfg.frames_per_epoch,
        epochs_per_layer=cfg.epochs,
        step_size=cfg.step_size,
        momentum=cfg.momentum,
        seed=cfg.seed,
        mode=cfg.mode,
        variant=cfg.variant,
        decode_p=cfg.decode_p
    )
    logger.info(f"🚀 Training {train_cfg.variant} decoder over {train_cfg.iterations} iterations on {code.code_id}")
    params = training.train_greedy(code.h, train_cfg, code.g, progress=cfg.progress)
    if cfg.out in (None, "-"):
        print(storage.params_text(params), end="")
    else:
        storage.save_params(params, cfg.out)
        logger.info(f"✅ Wrote {storage.params_id(params)} to {cfg.out}")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    _require(cfg, "embeddings", "out")
    subjects, matrix = storage.load_embeddings(cfg.embeddings, FEATURE_DIM)
    labels = np.asarray(subjects) if subjects is not None else np.arange(matrix.shape[0])
    table = feature_pipeline.fit_quantizer(matrix, cfg.q)

    unmasked = PipelineConfig(cfg.q, cfg.perm_seed, cfg.mask_seed, 0.0, cfg.tau, cfg.kappa_quantile, FEATURE_DIM)
    permuted = feature_pipeline.permuted_templates(matrix, unmasked, table).bits
    first, second = feature_pipeline.sample_pairs(labels, cfg.pairs, cfg.seed, mated=False)
    kappa = feature_pipeline.search_kappa(permuted[first], permuted[second], cfg.tau, cfg.kappa_quantile, cfg.mask_seed)

    pipeline = PipelineConfig(cfg.q, cfg.perm_seed, cfg.mask_seed, kappa, cfg.tau, cfg.kappa_quantile, FEATURE_DIM)
    mask = feature_pipeline.gen_mask(kappa, cfg.mask_seed, pipeline.template_length)
    distances = feature_pipeline.masked_distances(permuted[first], permuted[second], mask.bits)
    achieved = float(np.mean(distances > cfg.tau))

    storage.save_pipeline(pipeline, cfg.out)
    quantizer_out = cfg.quantizer_out or os.path.splitext(cfg.out)[0] + ".quantizer.json"
    storage.save_quantizer(table, quantizer_out)
    logger.info(f"✅ Wrote pipeline {cfg.out} and quantizer {quantizer_out}")
    write_json({
        "kappa": kappa,
        "tau": cfg.tau,
        "target_quantile": cfg.kappa_quantile,
        "achieved_quantile": achieved,
        "pairs": int(first.size)
    })
    return EXIT_OK


def cmd_enroll(cfg: RunConfig) -> int:
    _require(cfg, "out")
    pipeline, table = _pipeline(cfg)
    code = _code(cfg)
    template = _probe_template(cfg, pipeline, table)
    key = commitment.generate_key(pipeline.m, cfg.test_key_seed, block_bits=code.k)
    params_id = storage.params_id(storage.load_params(cfg.params)) if cfg.params else ""
    record = commitment.enroll(template, key, code, pipeline, params_id)
    storage.save_commitment(record, cfg.out)
    logger.info(f"✅ Enrolled row {cfg.row} into {cfg.out}")
    write_json({
        "commitment": cfg.out,
        "key_bits": int(key.bits.size),
        "key_hex": key.packed().hex(),
        "test_mode": key.test_mode
    })
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    _require(cfg, "commitment")
    pipeline, table = _pipeline(cfg)
    code = _code(cfg)
    record = storage.load_commitment(cfg.commitment)
    params = _decoder(cfg)
    current_id = storage.params_id(params) if cfg.params else ""
    if record.decoder_params_id and current_id and record.decoder_params_id != current_id:
        logger.warning(f"Commitment was enrolled with decoder {record.decoder_params_id}, verifying with {current_id}")
    probe = _probe_template(cfg, pipeline, table)
    outcome = commitment.retrieve(probe, record, code, params, pipeline, cfg.decode_p, params.iterations)
    result = outcome.to_dict()
    if outcome.success:
        result["key_hex"] = outcome.key.packed().hex()
    write_json(result)
    return EXIT_OK if outcome.success else EXIT_REJECTED


def _population_trials(cfg: RunConfig) -> Dict[str, Any]:
    """Reference/probe templates of mated and non-mated trials plus per-stage statistics"""
    if cfg.population:
        population = storage.load_population(cfg.population)
        mated_ref, mated_probe = population.trials("mated")
        nonmated_ref, nonmated_probe = population.trials("nonmated")
        stages = None
    else:
        _require(cfg, "embeddings")
        pipeline, table = _pipeline(cfg)
        subjects, matrix = storage.load_embeddings(cfg.embeddings, pipeline.dim)
        if subjects is None:
            raise ArgumentError("evaluation embeddings need a subject id column")
        labels = np.asarray(subjects)
        pairs = cfg.trials or cfg.pairs
        mated_first, mated_second = feature_pipeline.sample_pairs(labels, pairs, prng.derive_seed(cfg.seed, 0), mated=True)
        nm_first, nm_second = feature_pipeline.sample_pairs(labels, pairs, prng.derive_seed(cfg.seed, 1), mated=False)
        templates = feature_pipeline.transform(matrix, pipeline, table).bits
        mated_ref, mated_probe = templates[mated_first], templates[mated_second]
        nonmated_ref, nonmated_probe = templates[nm_first], templates[nm_second]
        first = np.concatenate([mated_first, nm_first])
        second = np.concatenate([mated_second, nm_second])
        matched = np.arange(first.size) < mated_first.size
        stages = feature_pipeline.stage_distance_stats(matrix[first], matrix[second], matched, pipeline, table)

    if cfg.trials:
        mated_ref, mated_probe = mated_ref[:cfg.trials], mated_probe[:cfg.trials]
        nonmated_ref, nonmated_probe = nonmated_ref[:cfg.trials], nonmated_probe[:cfg.trials]
    return {
        "mated": (mated_ref, mated_probe),
        "nonmated": (nonmated_ref, nonmated_probe),
        "stages": stages
    }


def cmd_eval(cfg: RunConfig) -> int:
    trials = _population_trials(cfg)
    code = _code(cfg)
    params = _decoder(cfg)
    mated_ref, mated_probe = trials["mated"]
    nonmated_ref, nonmated_probe = trials["nonmated"]
    m = _blocks_of(mated_ref.shape[1])

    outcomes = {}
    for index, (role, (references, probes)) in enumerate((("mated", trials["mated"]), ("nonmated", trials["nonmated"]))):
        deltas, hashes = commitment.enroll_many(references, code, m, prng.derive_seed(cfg.seed, 2 + index))
        logger.info(f"Retrieving {references.shape[0]} {role} trials with {params.variant}")
        outcomes[role] = commitment.retrieval_curves(
            probes, deltas, hashes, code, params, m,
            decode_p=cfg.decode_p, chunk=cfg.chunk, progress=cfg.progress
        )
    report = metrics.gmr_fmr(outcomes["mated"], outcomes["nonmated"])
    if report.gmr_at_zero_fmr is None:
        logger.warning("No iteration reaches an empirical FMR of zero")
    write_frame(gmr_fmr_frame(report), cfg.out)

    summary = report.to_dict()
    summary["decoder"] = params.variant
    stats = ScoreStats(
        _fractional_distances(mated_ref, mated_probe),
        _fractional_distances(nonmated_ref, nonmated_probe)
    )
    try:
        summary["d_prime"] = metrics.decidability(stats)
    except UndefinedResultError:
        summary["d_prime"] = None
    if trials["stages"] is not None:
        summary["stages"] = trials["stages"]
    logger.info(
        f"GMR={summary['gmr_final']:.4f} FMR={summary['fmr_final']:.4f} "
        f"GMR@0FMR={summary['gmr_at_zero_fmr']}"
    )
    if cfg.report_out:
        write_json(summary, cfg.report_out)
    return EXIT_OK


def cmd_unlink(cfg: RunConfig) -> int:
    """
    Link commitments of the same subject under independent keys (mated)
    against commitments of neighbouring subjects (non-mated). The linkage
    score is the fractional distance between the two stored differences.
    """
    _require(cfg, "population")
    population = storage.load_population(cfg.population)
    code = _code(cfg)
    keys = cfg.keys_per_subject
    if keys < 2 or keys - 1 > population.mated.shape[1]:
        raise ArgumentError(f"keys per subject must lie in [2, {population.mated.shape[1] + 1}], got {keys}")
    if population.subjects < 2:
        raise ArgumentError("unlinkability needs at least two subjects")
    m = _blocks_of(population.anchors.shape[1])

    # Commitment j of a subject binds the anchor (j=0) or mated sample j-1
    templates = np.concatenate([population.anchors[:, None], population.mated[:, :keys - 1]], axis=1)
    flat = templates.reshape(-1, templates.shape[-1])
    deltas, _ = commitment.enroll_many(flat, code, m, prng.derive_seed(cfg.seed, 0))
    deltas = deltas.reshape(population.subjects, keys, -1)

    mated = _fractional_distances(deltas[:, :-1].reshape(-1, deltas.shape[-1]), deltas[:, 1:].reshape(-1, deltas.shape[-1]))
    neighbours = np.roll(deltas, -1, axis=0)
    nonmated = _fractional_distances(deltas[:, :-1].reshape(-1, deltas.shape[-1]), neighbours[:, 1:].reshape(-1, deltas.shape[-1]))
    report = metrics.unlinkability(
        mated, nonmated, bins=cfg.bins, omega=cfg.omega, resolution=1.0 / deltas.shape[-1]
    )
    logger.info(f"D_sys={report.d_sys:.4f} over {mated.size} mated and {nonmated.size} non-mated pairs")

    if cfg.curve_out:
        write_frame(linkability_frame(report), cfg.curve_out)
    summary = report.to_dict()
    summary.update({"mated_pairs": int(mated.size), "nonmated_pairs": int(nonmated.size)})
    write_json(summary, cfg.out)
    return EXIT_OK


def cmd_security(cfg: RunConfig) -> int:
    d_prime = None
    if cfg.scores:
        mated, nonmated = storage.load_scores(cfg.scores)
        entropy = metrics.entropy_report(nonmated)
        if mated.size:
            try:
                d_prime = metrics.decidability(ScoreStats(mated, nonmated))
            except UndefinedResultError:
                logger.warning("Decidability undefined for these scores")
    else:
        _require(cfg, "e_hd", "v_hd")
        degrees = metrics.dof(cfg.e_hd, cfg.v_hd)
        entropy = EntropyReport(cfg.e_hd, cfg.v_hd, degrees, metrics.entropy_iid(degrees, cfg.e_hd))

    m = cfg.m if cfg.m is not None else DEFAULT_Q - 1
    code = _code(cfg) if cfg.capability_rate is not None else None
    t = cfg.t
    if t is None and code is not None:
        t = metrics.tolerated_bits(cfg.capability_rate, m * code.n)
        logger.info(f"Capability rate {cfg.capability_rate} over {m * code.n} bits tolerates t={t}")
    report = metrics.security_report(entropy.entropy, key_bits=100 * m, t=t, d=cfg.d)

    summary = {**entropy.to_dict(), **report.to_dict(), "d_prime": d_prime}
    write_json(summary, cfg.out)
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    _require(cfg, "out")
    if cfg.kind == "embeddings":
        subjects, matrix = simulation.synth_embeddings(cfg.subjects, cfg.samples, FEATURE_DIM, cfg.noise, cfg.seed)
        storage.save_embeddings(subjects, matrix, cfg.out)
        logger.info(f"✅ Wrote {matrix.shape[0]} synthetic embeddings to {cfg.out}")
        return EXIT_OK
    if cfg.kind != "binary":
        raise ArgumentError(f"unknown synthetic population kind '{cfg.kind}'")
    m = cfg.m if cfg.m is not None else DEFAULT_Q - 1
    length = cfg.length or commitment.FEATURE_BLOCK * m
    synth_cfg = SynthConfig(cfg.subjects, cfg.samples, length, cfg.p_m, cfg.p_nm, cfg.seed)
    population = simulation.synth_population(synth_cfg)
    storage.save_population(population, cfg.out)
    logger.info(f"✅ Wrote {population.subjects} synthetic subjects to {cfg.out}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "build-code": cmd_build_code,
    "fer": cmd_fer,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "enroll": cmd_enroll,
    "verify": cmd_verify,
    "eval": cmd_eval,
    "unlink": cmd_unlink,
    "security": cmd_security,
    "synth": cmd_synth,
}
