import json
import subprocess
import sys

import pytest

from mutforge.cli import Settings, build_parser, load_config, main, run_config_from
from mutforge.operator_catalog import builtin_catalog, parse_catalog

from conftest import DATA, TOY_CORPUS, needs_cc


def settings_for(argv):
    args = build_parser().parse_args(argv)
    config, base = load_config(args.config)
    return Settings(args, config, base)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        f'[run]\ncorpus_root = "{TOY_CORPUS}"\ntest_command = ["sh", "test.sh"]\n'
        'build_command = "sh build.sh"\nworkers = 2\ntimeout = 7\nworkspace_root = "ws"\n'
        '[run.env]\nA = "1"\n'
    )
    return path


def test_flag_overrides_config(config_file):
    cfg = run_config_from(settings_for(["--config", str(config_file), "run", "--workers", "4"]))
    assert cfg.workers == 4
    assert cfg.timeout == 7
    assert cfg.build_command == ["sh", "build.sh"]
    assert cfg.workspace_root == config_file.parent / "ws"
    assert cfg.env == {"A": "1"}


def test_config_overrides_default(config_file):
    cfg = run_config_from(settings_for(["--config", str(config_file), "run", "--env", "B=2"]))
    assert cfg.workers == 2
    assert cfg.env == {"A": "1", "B": "2"}


def test_defaults_without_config(tmp_path):
    cfg = run_config_from(settings_for(["run", "--corpus", str(tmp_path), "--test", "make check"]))
    assert cfg.workers == 1 and cfg.timeout == 300 and cfg.build_command == []
    assert cfg.test_command == ["make", "check"]


def test_config_from_environment(config_file, monkeypatch):
    monkeypatch.setenv("MUTFORGE_CONFIG", str(config_file))
    assert run_config_from(settings_for(["run"])).workers == 2


def test_relative_paths_resolve_against_config_dir():
    cfg = run_config_from(settings_for(["--config", str(DATA / "toy_campaign.toml"), "run"]))
    assert cfg.corpus_root == TOY_CORPUS


@pytest.mark.parametrize("argv", [["bogus"], [], ["run", "--no-such-flag"], ["report", "--format", "xml"]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_required_settings_exit_2(tmp_path, capsys):
    assert main(["run", "--corpus", str(tmp_path)]) == 2
    assert "test command" in capsys.readouterr().err
    assert main(["mine"]) == 2


def test_bad_config_file_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[run\n")
    assert main(["--config", str(bad), "stats"]) == 2
    assert main(["--config", str(tmp_path / "absent.toml"), "stats"]) == 2


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "mutforge" in capsys.readouterr().out


def test_stats_default_fixture(capsys):
    assert main(["stats", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["total"] == 596


def test_stats_explicit_dataset(capsys):
    assert main(["stats", "--dataset", str(DATA / "vulnerabilities.csv")]) == 0
    assert "596" in capsys.readouterr().out


def test_stats_missing_dataset_exit_1(tmp_path):
    assert main(["stats", "--dataset", str(tmp_path / "none.csv")]) == 1


def test_catalog_print_round_trips(capsys):
    assert main(["catalog", "print"]) == 0
    assert parse_catalog(capsys.readouterr().out) == builtin_catalog()


def test_catalog_validate(tmp_path, capsys):
    path = tmp_path / "ops.toml"
    main(["catalog", "print"])
    path.write_text(capsys.readouterr().out)
    assert main(["catalog", "validate", str(path)]) == 0
    path.write_text(path.read_text().replace("id = 'LOCK-DEL'", "id = 'INIT-DEL'"))
    assert main(["catalog", "validate", str(path)]) == 1
    assert "duplicate" in capsys.readouterr().err


def test_mine_fixture(capsys):
    assert main(["mine", "--log", str(DATA / "commits.tsv"), "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["flagged"]) == 25
    assert main(["mine", str(DATA / "commits.tsv"), "--group"]) == 0
    out = capsys.readouterr().out
    assert "CVE-2021-29512" in out and "(no CVE)" in out


def test_scan_prints_sites(capsys):
    assert main(["scan", str(TOY_CORPUS)]) == 0
    sites = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(sites) == 12


def test_scan_into_store_then_report(tmp_path, capsys):
    store = tmp_path / "s"
    assert main(["scan", str(TOY_CORPUS), "--store", str(store)]) == 0
    assert "12 new mutants" in capsys.readouterr().out
    assert main(["report", "--store", str(store), "--summary", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["counts"]["Pending"] == 12


def test_report_on_missing_store_exit_1(tmp_path):
    assert main(["report", "--store", str(tmp_path / "nothing")]) == 1


@needs_cc
def test_run_with_limit_leaves_pending(tmp_path, capsys):
    store = tmp_path / "s"
    argv = ["--config", str(DATA / "toy_campaign.toml"), "run", "--store", str(store),
            "--workspace", str(tmp_path / "ws"), "--limit", "2"]
    assert main(argv) == 1
    assert "still pending" in capsys.readouterr().err
    assert main(["report", "--store", str(store)]) == 0
    assert "Pending          10" in capsys.readouterr().out


@needs_cc
def test_report_formats_on_toy_store(toy_campaign, capsys):
    store_path, _, _ = toy_campaign
    assert main(["report", "--store", str(store_path), "--group-by", "cwe"]) == 0
    out = capsys.readouterr().out
    assert "0.727" in out and "CWE-476 (1)" in out
    assert main(["report", "--store", str(store_path), "--format", "csv"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1 + 3
    assert main(["report", "--store", str(store_path), "--exclude-timeouts"]) == 0
    out = capsys.readouterr().out
    assert "0.700" in out and "0.727" not in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mutforge", "catalog", "validate", "/nonexistent"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
