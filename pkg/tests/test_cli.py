import json
from pathlib import Path

import pytest

from dualpop.cli import main
from dualpop.config import ConfigError, parse_config
from dualpop.experiments import (EXPERIMENTS, UnknownExperimentError,
                                 experiment_names, experiment_schema,
                                 run_experiment)

SCHEMA = {"d": (float, 1.0), "k": (int, 2), "tag": (str, "x")}


class TestParseConfig:
    def test_defaults_with_named_experiment(self):
        cfg = parse_config(SCHEMA, text="", experiment="duality_moment")
        assert cfg.experiment == "duality_moment"
        assert cfg.params == {"d": 1.0, "k": 2, "tag": "x"}
        assert cfg.seed == 0

    def test_override_precedence(self):
        cfg = parse_config(SCHEMA, text="d = 1.0\n", overrides={"d": "2.0"},
                           experiment="e")
        assert cfg.params["d"] == 2.0

    def test_malformed_value_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"line 2.*'d'.*float"):
            parse_config(SCHEMA, text="k = 3\nd = abc\n", experiment="e")

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ConfigError, match="line 1.*'bogus'"):
            parse_config(SCHEMA, text="bogus = 1\n", experiment="e")

    def test_missing_experiment_name(self):
        with pytest.raises(ConfigError, match="experiment"):
            parse_config(SCHEMA, text="d = 1.0\n")

    def test_experiment_and_seed_from_file(self):
        cfg = parse_config(SCHEMA, text="experiment = foo\nseed = 9\nformat = json\n")
        assert cfg.experiment == "foo"
        assert cfg.seed == 9
        assert cfg.fmt == "json"

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config(SCHEMA, text="\n# comment\nd = 3.5  # trailing\n",
                           experiment="e")
        assert cfg.params["d"] == 3.5

    def test_bad_format_rejected(self):
        with pytest.raises(ConfigError, match="format"):
            parse_config(SCHEMA, text="", experiment="e", fmt="xml")


class TestRegistry:
    def test_all_nine_experiments_registered(self):
        assert experiment_names() == sorted([
            "emergence_scaling", "droplet_growth", "cmj_alpha", "duality_moment",
            "duality_spatial", "mkv_fixation", "colonization",
            "intensity_fixed_point", "single_site_timescale"])

    def test_unknown_experiment_lists_names(self):
        with pytest.raises(UnknownExperimentError, match="droplet_growth"):
            experiment_schema("nope")

    def test_schemas_have_typed_defaults(self):
        for name in experiment_names():
            for key, (typ, default) in experiment_schema(name).items():
                assert typ in (int, float, str)
                assert isinstance(default, typ), (name, key)


class TestCliRuns:
    def test_list_prints_registry(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        for name in experiment_names():
            assert name in out

    def test_unknown_experiment_errors(self, capsys, tmp_path):
        rc = main(["run", "--experiment", "nope", "--out", str(tmp_path)])
        assert rc == 2
        assert "registered" in capsys.readouterr().err

    def test_reproducible_bytes(self, tmp_path, capsys):
        argv = ["run", "--experiment", "single_site_timescale", "--seed", "11",
                "--replicas", "6", "--L_values", "40,160"]
        assert main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--out", str(tmp_path / "b")]) == 0
        capsys.readouterr()
        a = (tmp_path / "a" / "first_mutation_times.csv").read_bytes()
        b = (tmp_path / "b" / "first_mutation_times.csv").read_bytes()
        assert a == b

    def test_seed_changes_results_not_schema(self, tmp_path, capsys):
        argv = ["run", "--experiment", "single_site_timescale",
                "--replicas", "6", "--L_values", "40,160"]
        assert main(argv + ["--seed", "1", "--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--seed", "2", "--out", str(tmp_path / "b")]) == 0
        capsys.readouterr()
        a = (tmp_path / "a" / "first_mutation_times.csv").read_text().splitlines()
        b = (tmp_path / "b" / "first_mutation_times.csv").read_text().splitlines()
        header = next(i for i, line in enumerate(a) if not line.startswith("#"))
        assert a[header] == b[header]
        assert a[header + 1] != b[header + 1]

    def test_config_file_with_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("experiment = single_site_timescale\nreplicas = 4\n"
                       "L_values = 30,90\nd = 0.0\n")
        rc = main(["run", "--config", str(cfg), "--seed", "3",
                   "--out", str(tmp_path / "out"), "--replicas", "5"])
        assert rc == 0
        payload = json.loads((tmp_path / "out" / "single_site_timescale.json").read_text())
        assert payload["config"]["params"]["replicas"] == 5
        assert payload["config"]["seed"] == 3
        assert payload["config"]["artifact_version"]

    def test_malformed_override_errors(self, tmp_path, capsys):
        rc = main(["run", "--experiment", "single_site_timescale",
                   "--replicas", "oops", "--out", str(tmp_path)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "replicas" in err


class TestArtifacts:
    def test_json_format_skips_csv_tables(self, tmp_path, capsys):
        assert main(["run", "--experiment", "single_site_timescale", "--seed", "5",
                     "--replicas", "4", "--L_values", "30,90", "--format", "json",
                     "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        assert not (tmp_path / "first_mutation_times.csv").exists()
        assert (tmp_path / "single_site_timescale.json").exists()

    def test_json_manifest_embeds_provenance(self, tmp_path, capsys):
        assert main(["run", "--experiment", "single_site_timescale", "--seed", "5",
                     "--replicas", "4", "--L_values", "30,90",
                     "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        payload = json.loads((tmp_path / "single_site_timescale.json").read_text())
        assert set(payload) == {"config", "seed", "results"}
        assert payload["seed"] == 5

    def test_csv_has_header_and_lf_endings(self, tmp_path, capsys):
        assert main(["run", "--experiment", "single_site_timescale", "--seed", "5",
                     "--replicas", "4", "--L_values", "30,90",
                     "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        raw = (tmp_path / "first_mutation_times.csv").read_bytes()
        assert b"\r\n" not in raw
        text = raw.decode()
        lines = [l for l in text.splitlines() if not l.startswith("#")]
        assert lines[0] == "L,median_time"
