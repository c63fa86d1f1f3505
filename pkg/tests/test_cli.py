import json
import shutil

import pytest

from foodgap import cli
from foodgap.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, RunConfig, read_config_file


@pytest.fixture
def data_dir(small_synth, tmp_path):
    src = small_synth["paths"]["posts"].parent
    dest = tmp_path / "data"
    shutil.copytree(src, dest)
    with (dest / "run.cfg").open("a") as fh:
        fh.write("folds = 5\n")
    return dest


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_full_run_then_skip(data_dir, capsys):
    out = data_dir / "store"
    assert run("run", "--config", data_dir / "run.cfg", "--out", out) == EXIT_OK
    assert "report: done" in capsys.readouterr().out
    prov = (out / "provenance.jsonl").read_text().splitlines()
    assert [json.loads(l)["stage"] for l in prov] == ["ingest", "features", "correlate", "report"]
    state = json.loads((out / "state.json").read_text())
    assert set(state) == {"ingest", "features", "correlate", "report"}
    assert (out / "report" / "AdultObesity_gap.md").exists()
    assert (out / "report" / "table_gap.md").exists()

    assert run("run", "--config", data_dir / "run.cfg", "--out", out) == EXIT_OK
    assert capsys.readouterr().out.count("up to date") == 4
    assert len((out / "provenance.jsonl").read_text().splitlines()) == 4


def test_config_mismatch_and_force(data_dir, capsys):
    out = data_dir / "store"
    base = ("run", "--config", data_dir / "run.cfg", "--out", out)
    assert run(*base) == EXIT_OK
    assert run(*base, "--alpha", "0.01") == EXIT_USAGE
    assert "different configuration" in capsys.readouterr().err
    assert run(*base, "--alpha", "0.01", "--force") == EXIT_OK


def test_missing_upstream(tmp_path, capsys):
    assert run("correlate", "--out", tmp_path / "empty") == EXIT_DATA
    assert "run features first" in capsys.readouterr().err


def test_bad_input_is_data_error(data_dir, capsys):
    (data_dir / "vocab.csv").write_text("tag,category\nburger,nonsense\n")
    assert run("ingest", "--config", data_dir / "run.cfg", "--out", data_dir / "s") == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == EXIT_USAGE
    assert run("report", "--top", "0", "--out", tmp_path) == EXIT_USAGE


def test_stage_by_stage_equals_run(data_dir):
    cfg = data_dir / "run.cfg"
    for stage in ("ingest", "features", "correlate", "report"):
        assert run(stage, "--config", cfg, "--out", data_dir / "a") == EXIT_OK
    assert run("run", "--config", cfg, "--out", data_dir / "b") == EXIT_OK
    for f in sorted((data_dir / "a" / "report").iterdir()):
        assert f.read_bytes() == (data_dir / "b" / "report" / f.name).read_bytes()


def test_threads_do_not_change_bytes(data_dir):
    cfg = data_dir / "run.cfg"
    assert run("run", "--config", cfg, "--out", data_dir / "t1") == EXIT_OK
    assert run("run", "--config", cfg, "--out", data_dir / "t4", "--threads", 4) == EXIT_OK
    for stage in ("ingest", "features", "correlate", "report"):
        for f in sorted((data_dir / "t1" / stage).iterdir()):
            assert f.read_bytes() == (data_dir / "t4" / stage / f.name).read_bytes(), f.name


def test_synth_subcommand(tmp_path, capsys):
    assert run("synth", "--out", tmp_path / "s", "--counties", 6, "--users-per-county", 2,
               "--images-per-user", 2, "--vocab-size", 5, "--seed", 1) == EXIT_OK
    assert (tmp_path / "s" / "posts.jsonl").exists()


def test_config_file_parsing(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("# comment\nposts = p.jsonl\nalpha = 0.1\nsignificant-only = no\nlabels = healthy\n")
    vals = read_config_file(p)
    assert vals["posts"] == str(tmp_path / "p.jsonl")
    cfg = RunConfig(**vals)
    assert cfg.alpha == 0.1 and cfg.significant_only is False and cfg.labels == ("healthy",)
    p.write_text("nonsense = 3\n")
    with pytest.raises(ValueError, match="unknown key"):
        read_config_file(p)
