import json

import pandas as pd
import pytest

import main
from handlers.error_handlers import EXIT_OK, EXIT_REJECTED, EXIT_USAGE


def run(capsys, *argv):
    code = main.main([*argv, "--no-progress"])
    return code, capsys.readouterr().out


@pytest.fixture(scope="module")
def enrolled_files(tmp_path_factory):
    """Synthetic embeddings, a calibrated pipeline and one commitment for row 0"""
    root = tmp_path_factory.mktemp("biokey")
    paths = {
        "embeddings": str(root / "emb.csv"),
        "pipeline": str(root / "pipe.json"),
        "quantizer": str(root / "pipe.quantizer.json"),
        "commitment": str(root / "commitment.json"),
    }
    assert main.main([
        "synth", "--kind", "embeddings", "--subjects", "12", "--samples", "3", "--noise", "0.3",
        "--seed", "5", "--out", paths["embeddings"]
    ]) == EXIT_OK
    assert main.main([
        "calibrate", "--embeddings", paths["embeddings"], "--pairs", "300", "--out", paths["pipeline"]
    ]) == EXIT_OK
    assert main.main([
        "enroll", "--pipeline", paths["pipeline"], "--quantizer", paths["quantizer"],
        "--embeddings", paths["embeddings"], "--row", "0", "--test-key-seed", "7",
        "--out", paths["commitment"]
    ]) == EXIT_OK
    return paths


def test_build_code(capsys, tmp_path):
    out = tmp_path / "bg2.alist"
    code, stdout = run(capsys, "build-code", "--out", str(out))
    assert code == EXIT_OK
    assert stdout.strip() == "n=520 k=100 r=420 edges=1970"
    assert out.exists() and (tmp_path / "bg2.gen.json").exists()


def test_fer_single_noiseless_frame(capsys):
    code, stdout = run(capsys, "fer", "--p", "0", "--frames", "1", "--seed", "2024")
    assert code == EXIT_OK
    assert stdout.splitlines() == [
        "decoder,p,frames,errors,fer,iterations,seed",
        "ms,0.0,1,0,0.0,100,2024",
    ]


def test_fer_output_does_not_depend_on_workers(capsys, tmp_path):
    outputs = []
    for workers in ("1", "3"):
        out = tmp_path / f"fer-{workers}.csv"
        code, _ = run(
            capsys, "fer", "--decoder", "ms,nms", "--p-grid", "0.15,0.17", "--frames", "12",
            "--iters", "20", "--chunk", "3", "--workers", workers, "--seed", "4", "--out", str(out)
        )
        assert code == EXIT_OK
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    frame = pd.read_csv(tmp_path / "fer-1.csv")
    assert frame["decoder"].tolist() == ["ms", "ms", "nms", "nms"]


def test_fer_per_iteration_curve(capsys, tmp_path):
    curve = tmp_path / "curve.csv"
    code, _ = run(
        capsys, "fer", "--p", "0.16", "--frames", "6", "--iters", "5", "--per-iteration-out", str(curve),
        "--out", str(tmp_path / "fer.csv")
    )
    assert code == EXIT_OK
    frame = pd.read_csv(curve)
    assert frame["iteration"].tolist() == [1, 2, 3, 4, 5]


def test_fer_needs_a_crossover_rate(capsys):
    code, _ = run(capsys, "fer", "--frames", "1")
    assert code == EXIT_USAGE


def test_dump_config_applies_precedence(capsys, tmp_path):
    config = tmp_path / "settings.json"
    config.write_text(json.dumps({"frames": 2, "seed": 9}))
    code, stdout = run(capsys, "fer", "--config", str(config), "--frames", "3", "--dump-config")
    assert code == EXIT_OK
    settings = json.loads(stdout)
    assert settings["command"] == "fer"
    assert settings["frames"] == 3
    assert settings["seed"] == 9


def test_unknown_config_key_is_a_usage_error(capsys, tmp_path):
    config = tmp_path / "settings.json"
    config.write_text(json.dumps({"frame_count": 2}))
    code, _ = run(capsys, "fer", "--config", str(config), "--p", "0.1")
    assert code == EXIT_USAGE


def test_missing_input_file_is_a_usage_error(capsys, tmp_path):
    code, _ = run(capsys, "security", "--scores", str(tmp_path / "absent.csv"))
    assert code == EXIT_USAGE


def test_bad_flag_exits_through_argparse():
    with pytest.raises(SystemExit) as info:
        main.main(["fer", "--frames", "many"])
    assert info.value.code == 2


def test_train_then_fer_with_trained_params(capsys, tmp_path):
    params = tmp_path / "params.json"
    code, _ = run(
        capsys, "train", "--iters", "2", "--epochs", "1", "--frames-per-epoch", "4", "--out", str(params)
    )
    assert code == EXIT_OK
    assert json.loads(params.read_text())["iterations"] == 2
    code, stdout = run(capsys, "fer", "--params", str(params), "--p", "0.05", "--frames", "4")
    assert code == EXIT_OK
    row = stdout.splitlines()[1].split(",")
    assert row[0] == "neural" and row[5] == "2"


def test_neural_decoder_without_params_is_refused(capsys):
    code, _ = run(capsys, "fer", "--decoder", "neural", "--p", "0.1", "--frames", "1")
    assert code == EXIT_USAGE


def test_calibrate_outputs(enrolled_files):
    pipeline = json.loads(open(enrolled_files["pipeline"]).read())
    assert pipeline["q"] == 4 and pipeline["m"] == 3
    assert 0.0 < pipeline["kappa"] < 1.0
    quantizer = json.loads(open(enrolled_files["quantizer"]).read())
    assert len(quantizer["boundaries"]) == 512


def test_calibrate_reports_quantile(capsys, tmp_path, enrolled_files):
    code, stdout = run(
        capsys, "calibrate", "--embeddings", enrolled_files["embeddings"], "--pairs", "300",
        "--out", str(tmp_path / "pipe.json"), "--quantizer-out", str(tmp_path / "table.json")
    )
    assert code == EXIT_OK
    summary = json.loads(stdout)
    assert summary["achieved_quantile"] >= summary["target_quantile"] == 0.95
    assert (tmp_path / "table.json").exists()


def test_enroll_reports_a_test_mode_key(capsys, tmp_path, enrolled_files):
    code, stdout = run(
        capsys, "enroll", "--pipeline", enrolled_files["pipeline"], "--quantizer", enrolled_files["quantizer"],
        "--embeddings", enrolled_files["embeddings"], "--row", "0", "--test-key-seed", "7",
        "--out", str(tmp_path / "again.json")
    )
    assert code == EXIT_OK
    summary = json.loads(stdout)
    assert summary["key_bits"] == 300 and summary["test_mode"] is True
    assert len(summary["key_hex"]) == 76
    assert (tmp_path / "again.json").read_text() == open(enrolled_files["commitment"]).read()


def _verify(capsys, files, row):
    return run(
        capsys, "verify", "--commitment", files["commitment"], "--pipeline", files["pipeline"],
        "--quantizer", files["quantizer"], "--embeddings", files["embeddings"], "--row", str(row)
    )


def test_verify_same_subject_releases_the_key(capsys, enrolled_files, tmp_path):
    code, stdout = _verify(capsys, enrolled_files, 1)
    assert code == EXIT_OK
    outcome = json.loads(stdout)
    assert outcome["success"] is True
    enrolled = run(
        capsys, "enroll", "--pipeline", enrolled_files["pipeline"], "--quantizer", enrolled_files["quantizer"],
        "--embeddings", enrolled_files["embeddings"], "--test-key-seed", "7", "--out", str(tmp_path / "c.json")
    )[1]
    assert outcome["key_hex"] == json.loads(enrolled)["key_hex"]


def test_verify_other_subject_is_rejected(capsys, enrolled_files):
    code, stdout = _verify(capsys, enrolled_files, 3)
    assert code == EXIT_REJECTED
    outcome = json.loads(stdout)
    assert outcome["success"] is False
    assert "key_hex" not in outcome


def test_verify_refuses_a_foreign_pipeline(capsys, tmp_path, enrolled_files):
    pipeline = json.loads(open(enrolled_files["pipeline"]).read())
    pipeline["perm_seed"] = 99
    foreign = tmp_path / "foreign.json"
    foreign.write_text(json.dumps(pipeline))
    code, _ = run(
        capsys, "verify", "--commitment", enrolled_files["commitment"], "--pipeline", str(foreign),
        "--quantizer", enrolled_files["quantizer"], "--embeddings", enrolled_files["embeddings"]
    )
    assert code == EXIT_USAGE


@pytest.fixture(scope="module")
def population_file(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("population") / "pop.csv")
    assert main.main([
        "synth", "--subjects", "6", "--samples", "2", "--m", "1", "--p-m", "0.05", "--p-nm", "0.4",
        "--seed", "3", "--out", path
    ]) == EXIT_OK
    return path


def test_eval_on_a_population(capsys, tmp_path, population_file):
    curves = tmp_path / "gmr.csv"
    report = tmp_path / "report.json"
    code, _ = run(
        capsys, "eval", "--population", population_file, "--decoder", "ms", "--iters", "20",
        "--out", str(curves), "--report-out", str(report)
    )
    assert code == EXIT_OK
    frame = pd.read_csv(curves)
    assert list(frame.columns) == ["iter", "gmr", "fmr"]
    assert frame["iter"].tolist() == list(range(1, 21))
    summary = json.loads(report.read_text())
    assert summary["mated_trials"] == 12 and summary["nonmated_trials"] == 12
    assert summary["gmr_final"] >= 0.9
    assert summary["fmr_final"] == 0.0
    assert summary["d_prime"] > 0


def test_unlink_on_a_population(capsys, tmp_path, population_file):
    curve = tmp_path / "dlocal.csv"
    code, stdout = run(capsys, "unlink", "--population", population_file, "--bins", "10", "--curve-out", str(curve))
    assert code == EXIT_OK
    summary = json.loads(stdout)
    assert 0.0 <= summary["d_sys"] <= 1.0
    assert summary["mated_pairs"] == 6 and summary["nonmated_pairs"] == 6
    assert len(pd.read_csv(curve)) == 10


def test_unlink_independent_commitments_score_near_zero(capsys, tmp_path):
    path = str(tmp_path / "pop.csv")
    assert main.main([
        "synth", "--subjects", "1000", "--samples", "1", "--m", "3", "--p-m", "0.156", "--p-nm", "0.26",
        "--seed", "2024", "--out", path
    ]) == EXIT_OK
    capsys.readouterr()
    code, stdout = run(capsys, "unlink", "--population", path)
    assert code == EXIT_OK
    summary = json.loads(stdout)
    assert summary["mated_pairs"] == 1000 and summary["nonmated_pairs"] == 1000
    assert summary["bins"] == 3
    assert summary["d_sys"] <= 0.05


def test_security_from_moments(capsys):
    code, stdout = run(capsys, "security", "--e-hd", "0.5", "--v-hd", "0.05", "--t", "5")
    assert code == EXIT_OK
    summary = json.loads(stdout)
    assert summary["dof"] == pytest.approx(100.0)
    assert summary["H"] == pytest.approx(100.0)
    assert summary["key_bits"] == 300
    assert summary["h_sys"] == pytest.approx(summary["s_sphere"])


def test_security_from_capability_rate(capsys):
    code, stdout = run(
        capsys, "security", "--e-hd", "0.4113", "--v-hd", "0.0202", "--capability-rate", "0.1761", "--d", "274"
    )
    assert code == EXIT_OK
    summary = json.loads(stdout)
    assert summary["t"] == 274
    assert summary["s_gv"] is not None
    assert summary["h_sys"] <= 300
