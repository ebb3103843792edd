import json

import pytest

from ksdl.cli import main
from ksdl.dictionary import CoordinateDictionary

SMALL = {"dict_samples": 2, "reps": 1, "n_grid": [64, 128], "n_samples": 20, "bootstrap": 50,
         "phase": {"n_grid": [128, 256], "trials": 1, "iters": 5},
         "lemmas": {"structural": 3, "closed_form": 3, "certificate": 3, "coherence": 3,
                    "rip": 3, "perturbed_coherence": 3, "operator": 3, "lipschitz": 3}}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("command", ["gen-model", "check-conditions", "risk-gap", "deviation",
                                     "phase-transition"])
def test_outputs_are_deterministic(command, config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([command, "--config", config, "--seed", "0x1f", "--out", str(a)]) == 0
    assert main([command, "--config", config, "--seed", "31", "--out", str(b)]) == 0
    fa = _files(a)
    assert fa == _files(b)
    rep = json.loads(fa["report.json"])
    assert rep["verdict"] if command == "check-conditions" else rep["seed"] == 31
    for name, data in fa.items():
        if name.endswith(".csv"):
            assert data.startswith(b"# ksdl 0.1.0 seed=31 config_sha256=")


def test_gen_model_layout(config, tmp_path):
    out = tmp_path / "g"
    assert main(["gen-model", "--config", config, "--out", str(out)]) == 0
    d = json.loads((out / "D0_0.json").read_text())
    assert set(d) == {"rows", "cols", "data"} and len(d["data"]) == d["rows"] * d["cols"]
    CoordinateDictionary.from_dict(d)
    assert (out / "batch" / "Y.csv").exists()
    env = json.loads((out / "report.json").read_text())
    assert set(env) == {"command", "version", "seed", "config_sha256", "config", "theorem", "summary"}


def test_verify_lemmas(config, tmp_path):
    out = tmp_path / "v"
    assert main(["verify-lemmas", "--config", config, "--out", str(out)]) == 0
    assert (out / "lemmas.csv").read_text().count("\n") == 11


def test_non_empty_out_and_force(config, tmp_path, capsys):
    out = tmp_path / "o"
    out.mkdir()
    (out / "junk").write_text("x")
    assert main(["check-conditions", "--config", config, "--out", str(out)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["check-conditions", "--config", config, "--out", str(out), "--force"]) == 0


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"nope": 1}))
    assert main(["risk-gap", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert main(["risk-gap", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "o")]) == 2


def test_hypothesis_failure_exit(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**SMALL, "instance": {"eps": [1.0, 1.0]}}))
    assert main(["risk-gap", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert main(["risk-gap", "--config", str(cfg), "--out", str(tmp_path / "f"), "--force"]) == 0


def test_seed_range(tmp_path):
    with pytest.raises(SystemExit):
        main(["gen-model", "--seed", str(2 ** 64), "--out", str(tmp_path)])
    with pytest.raises(SystemExit):
        main(["gen-model", "--seed", "-1", "--out", str(tmp_path)])
