"""Configuration handling and the ``critnls`` command."""

import csv
import json
import math

import pytest

from critnls import cli
from critnls.config import (DEFAULTS, Experiment, apply_override, config_hash, dump_toml,
                            from_tree, get_path, load, parse_value)
from critnls.errors import ConfigError

FAST_ZETA = ["zeta.t_max=100.0", "zeta.points=21"]


# --- config ----------------------------------------------------------------

@pytest.mark.parametrize("text,value", [("3", 3), ("1e4", 1e4), ("true", True),
                                        ("[1, 2]", [1, 2]), ('"min"', "min"), ("min", "min")])
def test_parse_value(text, value):
    assert parse_value(text) == value


def test_override_sets_nested_field():
    tree = apply_override(DEFAULTS, "solver.t_max=1e4")
    assert tree["solver"]["t_max"] == 1e4 and DEFAULTS["solver"]["t_max"] == 1000.0


@pytest.mark.parametrize("assignment,fld", [("solver.nope=1", "solver.nope"),
                                            ("nosection.x=1", "nosection.x"),
                                            ("solver.t_max", "solver.t_max")])
def test_bad_override_names_field(assignment, fld):
    with pytest.raises(ConfigError) as exc:
        apply_override(DEFAULTS, assignment)
    assert exc.value.field == fld


@pytest.mark.parametrize("override,fld", [
    ("solver.gamma=0.4", "solver.gamma"),
    ("solver.dt0=-1.0", "solver.dt0"),
    ("experiment=\"bogus\"", "experiment"),
])
def test_validation_names_field(override, fld):
    with pytest.raises(ConfigError) as exc:
        load(overrides=[override])
    assert exc.value.field == fld


def test_unknown_section_rejected():
    with pytest.raises(ConfigError) as exc:
        from_tree({"extra": {}})
    assert exc.value.field == "extra"


def test_empty_sweep_rejected():
    with pytest.raises(ConfigError) as exc:
        load(overrides=['experiment="sweep"'])
    assert exc.value.field == "sweep.values"


def test_dump_toml_roundtrip(tmp_path):
    cfg = load(overrides=["solver.t_max=500.0", "params.R=1e41"])
    path = tmp_path / "c.toml"
    path.write_text(dump_toml(cfg.raw))
    again = load(path)
    assert again.raw["solver"] == cfg.raw["solver"]
    assert again.raw["params"] == cfg.raw["params"]
    assert again.params.R == 1e41


def test_config_hash_deterministic():
    a = load(overrides=["solver.t_max=500.0"])
    b = load(overrides=["solver.t_max=500.0"])
    c = load(overrides=["solver.t_max=501.0"])
    assert a.hash() == b.hash() == config_hash(a.raw) and a.hash() != c.hash()
    assert len(a.hash()) == 64


def test_default_R_is_minimal_admissible():
    cfg = load()
    assert cfg.params.R > 1 and math.isfinite(cfg.params.R)
    assert get_path(cfg.raw, "params.R") == "min"


# --- command line ----------------------------------------------------------

def test_parser_has_every_experiment():
    ap = cli.build_parser()
    for e in Experiment:
        args = ap.parse_args([e.value, "--out", "x"])
        assert args.command == e.value


def test_zeta_subcommand(tmp_path, capsys):
    rc = cli.main(["zeta", "--out", str(tmp_path), *sum([["--override", o] for o in FAST_ZETA], [])])
    assert rc == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["status"] == 0 and printed["experiment"] == "zeta"
    man = json.loads((tmp_path / "manifest.json").read_text())
    for key in ("config_hash", "config", "status", "violations", "wall_time_s", "tolerances",
                "versions", "reproducibility"):
        assert key in man
    assert man["config"]["zeta"]["points"] == 21
    rows = list(csv.reader(open(tmp_path / "zeta.csv")))
    assert len(rows) == 22
    summary = json.loads((tmp_path / "matching.json").read_text())
    assert summary["matching_max_residual"] <= cli.TOLERANCES["matching"]
    assert (tmp_path / "config.toml").exists()


def test_classify_subcommand(tmp_path):
    assert cli.main(["classify", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "verdicts.json").read_text())
    verdicts = {r["F"]: r["verdict"] for r in rows}
    assert verdicts["|u|^4.0"] == "Converging"
    assert verdicts["|u|^3.6"] == "Diverging"


def test_config_error_exit_code(tmp_path, capsys):
    out = tmp_path / "never"
    rc = cli.main(["sweep", "--out", str(out)])
    assert rc == 2 and not out.exists()
    assert "sweep.values" in capsys.readouterr().err


def test_invalid_toml_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("solver = [")
    assert cli.main(["zeta", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_outputs_deterministic(tmp_path):
    args = sum([["--override", o] for o in FAST_ZETA], [])
    cli.main(["zeta", "--out", str(tmp_path / "a"), *args])
    cli.main(["zeta", "--out", str(tmp_path / "b"), *args])
    for name in ("zeta.csv", "matching.json", "config.toml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]


def test_parallel_sweep(tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(dump_toml({
        "zeta": {"t_max": 100.0, "points": 11},
        "sweep": {"axis": "model.r0", "values": [5.0, 10.0, 20.0], "experiment": "zeta"},
    }))
    rc = cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--jobs", "2"])
    assert rc == 0
    rows = list(csv.reader(open(tmp_path / "s" / "sweep.csv")))
    assert rows[0][:2] == ["model.r0", "status"] and len(rows) == 4
    for k, r0 in enumerate((5.0, 10.0, 20.0)):
        job = tmp_path / "s" / f"job_{k:03d}"
        assert json.loads((job / "manifest.json").read_text())["config"]["model"]["r0"] == r0
    assert not (tmp_path / "s" / "failures.json").exists()
