import csv
import json
import socket

import numpy as np
import pytest

from privwad.harness.cli import main
from privwad.harness.experiments import ExperimentConfig, run_experiment, run_experiments, strip_timing
from privwad.harness.synthetic import SyntheticSpec, gen_synthetic, gen_text
from privwad.measures import load_matrix, write_matrix


class TestSynthetic:
    def test_clean(self):
        d = gen_synthetic(SyntheticSpec(size=50, dim=4))
        assert d.corrupted.size == 0 and d.labels is None

    def test_noise_count(self):
        d = gen_synthetic(SyntheticSpec(size=100, dim=4, noise_ratio=0.3))
        assert d.corrupted.size == 30 and np.unique(d.corrupted).size == 30

    def test_deterministic(self):
        spec = SyntheticSpec(size=40, dim=3, components=3, labeled=True, flip_ratio=0.1, seed=9)
        a, b = gen_synthetic(spec), gen_synthetic(spec)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_flips_change_labels(self):
        spec = SyntheticSpec(size=60, dim=3, components=3, labeled=True, flip_ratio=0.2, seed=1)
        clean = gen_synthetic(SyntheticSpec(size=60, dim=3, components=3, labeled=True, seed=1))
        d = gen_synthetic(spec)
        assert d.flipped.size == 12
        assert np.all(d.labels[d.flipped] != clean.labels[d.flipped])

    def test_names_are_independent_streams(self):
        a = gen_synthetic(SyntheticSpec(size=10, dim=2, name="a")).features
        b = gen_synthetic(SyntheticSpec(size=10, dim=2, name="b")).features
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("kw", [{"noise_ratio": 1.5}, {"flip_ratio": 0.1}, {"size": 0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SyntheticSpec(**kw)

    def test_text_overlap(self):
        c = gen_text(vocab_size=200, dim=4, words=20, overlap=0.5, seed=2)
        assert len(set(c.client_words) & set(c.server_words)) == 10
        assert c.client_measure().size == 20

    def test_text_too_small(self):
        with pytest.raises(ValueError):
            gen_text(vocab_size=10, words=6)


SMALL = dict(sizes=[30], dim=4, K=5, steps=20, repeats=2, vocab_size=100, words=10)


class TestExperiments:
    @pytest.mark.parametrize("name", ["quantgap", "speed", "dpgap", "detect", "contrib", "textmatch", "attack"])
    def test_reproducible(self, tmp_path, name):
        a = run_experiment(ExperimentConfig(experiment=name, seed=1, out_dir=str(tmp_path / "a"), **SMALL))
        b = run_experiment(ExperimentConfig(experiment=name, seed=1, out_dir=str(tmp_path / "b"), **SMALL))
        ra, rb = (strip_timing({k: v for k, v in r.report.items() if k != "config"}) for r in (a, b))
        assert json.dumps(ra, sort_keys=True) == json.dumps(rb, sort_keys=True)
        assert a.json_path.name == b.json_path.name

    def test_rows_tagged(self, tmp_path):
        cfg = ExperimentConfig(experiment="dpgap", seed=3, out_dir=str(tmp_path), **SMALL)
        res = run_experiment(cfg)
        with res.csv_path.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        assert all(r["config_hash"] == cfg.config_hash() and r["seed"] == "3" for r in rows)
        assert res.report["summary"]["monotone"]

    def test_hash_ignores_out_dir(self):
        a = ExperimentConfig(experiment="speed", out_dir="x")
        b = ExperimentConfig(experiment="speed", out_dir="y")
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != ExperimentConfig(experiment="speed", seed=1).config_hash()

    def test_failure_keeps_partial_rows(self, tmp_path):
        cfg = ExperimentConfig(experiment="quantgap", sizes=[20, 0], dim=3, methods=["triangle"],
                               out_dir=str(tmp_path))
        with pytest.raises(ValueError):
            run_experiment(cfg)
        (path,) = tmp_path.glob("quantgap-*.json")
        rep = json.loads(path.read_text())
        assert rep["status"] == "failed" and len(rep["rows"]) == 1

    def test_parallel_matches_serial(self):
        cfgs = [ExperimentConfig(experiment="dpgap", seed=s, **SMALL) for s in (0, 1)]
        ser = [strip_timing(r.report["rows"]) for r in run_experiments(cfgs, 1)]
        par = [strip_timing(r.report["rows"]) for r in run_experiments(cfgs, 2)]
        assert ser == par

    def test_unknown(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="nope")
        with pytest.raises(ValueError, match="unknown config keys"):
            ExperimentConfig.from_dict({"experiment": "speed", "bogus": 1})


@pytest.fixture
def inputs(tmp_path):
    r = np.random.default_rng(0)
    a, b = tmp_path / "mu.csv", tmp_path / "nu.csv"
    write_matrix(r.standard_normal((12, 3)), a)
    write_matrix(r.standard_normal((12, 3)) + 1, b)
    return str(a), str(b)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestCLI:
    def test_direct(self, capsys, inputs):
        code, out, _ = run_cli(capsys, "direct", "--input", inputs[0], "--input", inputs[1])
        assert code == 0 and json.loads(out)["distance"] > 0

    def test_triangle_matches_direct_with_ones(self, capsys, inputs):
        args = ("--input", inputs[0], "--input", inputs[1])
        _, d, _ = run_cli(capsys, "direct", *args)
        _, t, _ = run_cli(capsys, "triangle", *args)
        assert json.loads(t)["estimate"] == pytest.approx(json.loads(d)["distance"], rel=1e-6)
        assert json.loads(t)["solves"] == 3

    @pytest.mark.parametrize("verb", ["fedwad", "value", "dpgap"])
    def test_verbs_run(self, capsys, inputs, verb):
        code, out, _ = run_cli(capsys, verb, "--input", inputs[0], "--input", inputs[1])
        assert code == 0 and json.loads(out)

    def test_detect(self, capsys, inputs):
        code, out, _ = run_cli(capsys, "detect", "--input", inputs[0], "--input", inputs[1], "--k", "2")
        assert code == 0 and len(json.loads(out)["flagged"]) == 2

    def test_attack_dump(self, capsys, inputs, tmp_path):
        dump = tmp_path / "d.csv"
        code, out, _ = run_cli(capsys, "attack", "--input", inputs[0], "--input", inputs[1],
                               "--steps", "5", "--dump", str(dump))
        assert code == 0 and dump.exists() and json.loads(out)["steps"] == 5
        assert load_matrix(dump).shape == (12, 3)

    def test_attack_triangle_exit_2(self, capsys, inputs):
        code, _, err = run_cli(capsys, "attack", "--protocol", "triangle", "--input", inputs[0],
                               "--input", inputs[1])
        assert code == 2 and "unavailable" in err

    def test_missing_input_exit_2(self, capsys, inputs):
        code, _, err = run_cli(capsys, "direct", "--input", inputs[0])
        assert code == 2 and "--input" in err

    def test_bad_file_exit_2(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3\n")
        code, _, _ = run_cli(capsys, "direct", "--input", str(bad), "--input", str(bad))
        assert code == 2

    def test_unreachable_peer_exit_3(self, capsys, inputs):
        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            port = s.getsockname()[1]
        code, _, err = run_cli(capsys, "triangle", "--input", inputs[0], "--connect",
                               f"127.0.0.1:{port}", "--timeout", "1")
        assert code == 3 and "protocol error" in err

    def test_out_file(self, capsys, inputs, tmp_path):
        out = tmp_path / "r.json"
        code, stdout, _ = run_cli(capsys, "direct", "--input", inputs[0], "--input", inputs[1],
                                  "--out", str(out))
        assert code == 0 and stdout == "" and "distance" in json.loads(out.read_text())

    def test_bench(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"experiment": "dpgap", **SMALL}))
        code, out, _ = run_cli(capsys, "bench", "--config", str(cfg), "--out", str(tmp_path / "r"))
        assert code == 0
        (entry,) = json.loads(out)
        assert entry["summary"]["monotone"]
