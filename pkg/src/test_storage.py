import json
import re

import numpy as np
import pytest

from conftest import make_tiny_code
from data import storage
from data.models import BinaryTemplate, Commitment, DecoderParams, PipelineConfig, QuantizerTable, SynthConfig
from errors import ParseError, ValidationError, VersionError
from services import prng
from services.commitment import enroll, generate_key
from services.simulation import synth_population


def test_alist_round_trip(tmp_path, tiny_code):
    path = tmp_path / "tiny.alist"
    storage.save_alist(tiny_code.h, str(path))
    loaded = storage.load_alist(str(path))
    np.testing.assert_array_equal(loaded.dense(), tiny_code.h.dense())
    assert path.read_text().splitlines()[0] == "16 8"


def test_alist_errors_carry_line_numbers(tmp_path, tiny_code):
    path = tmp_path / "broken.alist"
    storage.save_alist(tiny_code.h, str(path))
    lines = path.read_text().splitlines()
    lines[5] = "x y"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as info:
        storage.load_alist(str(path))
    assert info.value.line == 6

    path.write_text("\n".join(lines[:3]) + "\n")
    with pytest.raises(ParseError, match="expected 8 values|unexpected end"):
        storage.load_alist(str(path))


def test_alist_code_uses_its_generator_sidecar(tmp_path):
    code = make_tiny_code(3)
    alist = tmp_path / "own.alist"
    storage.save_alist(code.h, str(alist))
    storage.save_generator(code.g, storage.generator_sidecar(str(alist)))
    loaded = storage.init_code(str(alist))
    assert loaded.code_id == "own"
    np.testing.assert_array_equal(loaded.g.info_positions, code.g.info_positions)
    assert storage.get_code(str(alist)) is loaded


def test_base_graph_parse_error(tmp_path):
    path = tmp_path / "bg.csv"
    path.write_text("2,3,test\n0,0,1\n1,two,0\n")
    with pytest.raises(ParseError) as info:
        storage.load_base_graph(str(path))
    assert info.value.line == 3
    path.write_text("2,3,test\n0,5,1\n")
    with pytest.raises(ValidationError):
        storage.load_base_graph(str(path))


def test_params_round_trip_and_id(tmp_path):
    params = DecoderParams("neural", 3, "shared", [0.8, 0.7, 0.9], [0.1, 0.0, 0.2])
    path = tmp_path / "params.json"
    storage.save_params(params, str(path))
    assert storage.load_params(str(path)) == params
    assert path.read_text() == storage.params_text(params)
    assert re.fullmatch(r"neural-i3-[0-9a-f]{12}", storage.params_id(params))
    assert storage.params_id(params) != storage.params_id(DecoderParams("neural", 3))


def test_params_version_and_json_errors(tmp_path):
    path = tmp_path / "params.json"
    data = DecoderParams.classical("nms", 4, alpha=0.8).to_dict()
    data["version"] = 99
    path.write_text(json.dumps(data))
    with pytest.raises(VersionError):
        storage.load_params(str(path))
    path.write_text('{"version": 1,\n "variant": }')
    with pytest.raises(ParseError) as info:
        storage.load_params(str(path))
    assert info.value.line == 2
    path.write_text('{"version": 1, "iterations": 3}')
    with pytest.raises(ParseError):
        storage.load_params(str(path))


def test_commitment_round_trip(tmp_path, bg2_code):
    cfg = PipelineConfig(4, 1, 2, kappa=0.25)
    template = BinaryTemplate(prng.random_bits(3, 1536), "masked")
    record = enroll(template, generate_key(3, test_seed=4), bg2_code, cfg, "ms-i10-abc")
    path = tmp_path / "commitment.json"
    storage.save_commitment(record, str(path))
    loaded = storage.load_commitment(str(path))
    assert isinstance(loaded, Commitment)
    assert loaded.to_dict() == record.to_dict()
    assert loaded.delta == record.delta


def test_pipeline_and_quantizer_round_trip(tmp_path):
    cfg = PipelineConfig(8, 3, 4, kappa=0.41, tau=0.22, dim=64)
    storage.save_pipeline(cfg, str(tmp_path / "pipe.json"))
    loaded = storage.load_pipeline(str(tmp_path / "pipe.json"))
    assert loaded.to_dict() == cfg.to_dict()
    table = QuantizerTable(4, [[-1.0, 0.0, 1.0], [0.1, 0.2, 0.3]])
    storage.save_quantizer(table, str(tmp_path / "q.json"))
    np.testing.assert_array_equal(storage.load_quantizer(str(tmp_path / "q.json")).boundaries, table.boundaries)


def test_population_round_trip(tmp_path):
    population = synth_population(SynthConfig(3, 2, 20, 0.1, 0.3, 5))
    path = tmp_path / "pop.csv"
    storage.save_population(population, str(path))
    text = path.read_text()
    assert text.startswith("# length=20\nsubject,role,sample,bits_hex\n")
    loaded = storage.load_population(str(path))
    np.testing.assert_array_equal(loaded.anchors, population.anchors)
    np.testing.assert_array_equal(loaded.mated, population.mated)
    np.testing.assert_array_equal(loaded.nonmated, population.nonmated)


def test_population_requires_length_header(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("subject,role,sample,bits_hex\n")
    with pytest.raises(ParseError):
        storage.load_population(str(path))


def test_embeddings_with_and_without_ids(tmp_path):
    matrix = prng.uniforms(1, 12).reshape(3, 4)
    storage.save_embeddings(["a", "a", "b"], matrix, str(tmp_path / "ids.csv"))
    subjects, loaded = storage.load_embeddings(str(tmp_path / "ids.csv"), dim=4)
    assert subjects == ["a", "a", "b"]
    np.testing.assert_allclose(loaded, matrix, rtol=1e-8)

    storage.save_embeddings(None, matrix, str(tmp_path / "bare.csv"))
    subjects, loaded = storage.load_embeddings(str(tmp_path / "bare.csv"), dim=4)
    assert subjects is None and loaded.shape == (3, 4)
    with pytest.raises(ParseError):
        storage.load_embeddings(str(tmp_path / "bare.csv"), dim=6)


def test_scores_file(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("label,score\nmated,0.2\nnonmated,0.45\nMated,0.25\n")
    mated, nonmated = storage.load_scores(str(path))
    assert mated.tolist() == [0.2, 0.25] and nonmated.tolist() == [0.45]
    path.write_text("label,score\nother,0.2\n")
    with pytest.raises(ValidationError):
        storage.load_scores(str(path))
