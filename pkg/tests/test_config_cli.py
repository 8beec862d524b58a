import json
import math

import numpy as np
import pytest

from maxdecay import cli, geometry
from maxdecay.config import ConfigError, build_config, parse_config
from maxdecay.experiments.records import CSV_HEADER, dumps_record, dumps_rows
from maxdecay.geometry import ProjectionFrame

SMALL_IDENTITIES = """\
seed = 11
n = 1 2
functions = 4
points = 50
cone_functions = 3
frames = 20
widths = 1 2
"""

SMALL_PIPELINE = """\
seed = 3
n = 1
lam = 64
atoms = 4
cells = 4
"""


def run(tmp_path, experiment, text, *extra, name="run"):
    cfg = tmp_path / f"{experiment}.cfg"
    cfg.write_text(text)
    out = tmp_path / name
    return cli.main([experiment, "--config", str(cfg), "--out", str(out), *extra]), out


def test_parse_lists_repeats_and_comments():
    vals = parse_config("# header\nn = 1 2\nn = 3   # trailing\n\nalpha = 0.5\nmeasure = tiny\n")
    assert vals == {"n": [1, 2, 3], "alpha": [0.5], "measure": ["tiny"]}
    assert isinstance(vals["n"][0], int) and isinstance(vals["alpha"][0], float)


@pytest.mark.parametrize("text, line, key", [
    ("n = 1\nbogus line\n", 2, None),
    ("n = 1\n\nlam =\n", 3, "lam"),
    ("bad key! = 3\n", 1, "bad key!"),
])
def test_parse_errors_locate_the_problem(text, line, key):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line and err.value.key == key
    assert f"line {line}" in str(err.value)


def test_build_config_defaults_and_overrides():
    cfg = build_config("pipeline", {"seed": [5], "lam": [32]}, seed=9)
    assert cfg.seed == 9 and cfg.params["lam"] == 32 and cfg.params["cells"] == 8
    assert cfg.resolved()["seed"] == 9
    with pytest.raises(ConfigError, match="field 'widgets'"):
        build_config("pipeline", {"seed": [1], "widgets": [2]})
    with pytest.raises(ConfigError, match="seed"):
        build_config("pipeline", {})
    with pytest.raises(ConfigError, match="single"):
        build_config("pipeline", {"seed": [1], "lam": [1, 2]})
    assert build_config("decay", {}).seed is None


def test_records_are_deterministic():
    rec = {"b": np.float64(0.1), "a": [np.int64(3), np.bool_(True)], "c": np.array([1.5, math.inf])}
    text = dumps_record(rec)
    assert text == dumps_record(dict(reversed(list(rec.items()))))
    assert json.loads(text) == {"a": [3, True], "b": 0.1, "c": [1.5, "inf"]}
    csv_text = dumps_rows([("x", 256.0, [0.5, -0.25], "q", 1 / 3)])
    assert csv_text.splitlines()[0] == ",".join(CSV_HEADER)
    assert csv_text.splitlines()[1] == "x,256.0,0.5 -0.25,q,0.3333333333333333"


def test_identities_command_passes_and_is_byte_identical(tmp_path):
    code, out = run(tmp_path, "identities", SMALL_IDENTITIES, name="a")
    assert code == 0
    code2, out2 = run(tmp_path, "identities", SMALL_IDENTITIES, name="b")
    assert code2 == 0
    assert (out / "identities.json").read_bytes() == (out2 / "identities.json").read_bytes()
    rec = json.loads((out / "identities.json").read_text())
    assert rec["status"] == 0 and rec["failures"] == []


def test_flipped_kernel_exits_with_tolerance_failure(tmp_path, monkeypatch, capsys):
    original = geometry.parabolic_frame

    def flipped(theta):
        fr = original(theta)
        return ProjectionFrame(fr.Pi, fr.L, fr.Q, -fr.G, fr.params)

    monkeypatch.setattr(geometry, "parabolic_frame", flipped)
    code, out = run(tmp_path, "identities", SMALL_IDENTITIES)
    assert code == 1
    err = capsys.readouterr().err
    assert "kernel_orientation" in err
    rec = json.loads((out / "identities.json").read_text())
    assert any("kernel_orientation" in f for f in rec["failures"])


def test_decay_command(tmp_path):
    code, out = run(tmp_path, "decay", "measure = tiny\nn = 1\nside = 0.001\n")
    assert code == 0
    rec = json.loads((out / "decay.json").read_text())
    assert abs(rec["fits"]["paraboloid"]["slope"]) <= 0.02
    assert (out / "decay_measure.txt").exists()
    assert (out / "decay.csv").read_text().startswith(",".join(CSV_HEADER))


def test_decay_reads_a_written_measure(tmp_path):
    _, out = run(tmp_path, "decay", "measure = tiny\nn = 1\nside = 0.001\n", name="first")
    path = out / "decay_measure.txt"
    code, out2 = run(tmp_path, "decay", f"measure = {path}\nn = 1\n", name="second")
    assert code == 0
    a = json.loads((out / "decay.json").read_text())["fits"]
    b = json.loads((out2 / "decay.json").read_text())["fits"]
    assert a == b


def test_pipeline_command_is_byte_identical(tmp_path):
    code, out = run(tmp_path, "pipeline", SMALL_PIPELINE, name="a")
    assert code == 0
    _, out2 = run(tmp_path, "pipeline", SMALL_PIPELINE, name="b")
    for name in ("pipeline.json", "pipeline.csv", "pipeline_measure.txt"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_pipeline_rejects_alpha_outside_range(tmp_path, capsys):
    code, _ = run(tmp_path, "pipeline", SMALL_PIPELINE + "alpha = -1\n")
    assert code == 2
    assert "alpha must lie in" in capsys.readouterr().err


def test_bourgain_infeasible_exit(tmp_path, capsys):
    code, _ = run(tmp_path, "bourgain", "seed = 1\nn = 2\nR = 256\n")
    assert code == 2
    assert "61529" in capsys.readouterr().err


@pytest.mark.parametrize("text, argv", [
    ("n = 1\nlam = 64\n", []),
    ("seed = 1\nthis is wrong\n", []),
    ("seed = 1\nlam = 1 2\n", []),
])
def test_usage_errors_exit_64(tmp_path, text, argv):
    code, _ = run(tmp_path, "pipeline", text, *argv)
    assert code == 64


def test_bad_subcommand_exits_64(tmp_path):
    with pytest.raises(SystemExit) as err:
        cli.main(["nonsense", "--config", str(tmp_path / "x.cfg")])
    assert err.value.code == 64
    code = cli.main(["decay", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)])
    assert code == 64


def test_seed_flag_overrides_config(tmp_path):
    _, a = run(tmp_path, "pipeline", SMALL_PIPELINE, "--seed", "4", name="a")
    _, b = run(tmp_path, "pipeline", SMALL_PIPELINE.replace("seed = 3", "seed = 4"), name="b")
    ra = json.loads((a / "pipeline.json").read_text())
    rb = json.loads((b / "pipeline.json").read_text())
    assert ra["report"] == rb["report"] and ra["seed"] == 4
