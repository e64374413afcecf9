import argparse
import csv
import json
import textwrap

import pytest

from pnp.cli import main, parse_counts
from pnp.engine import run
from pnp.render import RenderError, RenderSpec, render_svg, state_at
from pnp.scenario import preset

SMALL = """\
aoi: [[0, 0], [20, 0], [20, 20], [0, 20]]
n_sensors: 4
distribution: {kind: cluster, center: [10, 10], radius: 3}
max_time: 400
"""


@pytest.fixture()
def small(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def test_parse_counts():
    assert parse_counts("150") == [150]
    assert parse_counts("150,300") == [150, 300]
    assert parse_counts("3..5") == [3, 4, 5]
    assert parse_counts("100..300:100") == [100, 200, 300]
    for bad in ("x", "5..3", "1..4:0", ""):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_counts(bad)


def test_run_sweep_writes_aggregate(small, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", str(small), "--n", "3..5", "--seeds", "2", "--snapshots", "1",
                 "-o", str(out), "--allow-nonterm"])
    assert code == 0
    rows = list(csv.DictReader((out / "aggregate.csv").open()))
    assert len(rows) == 6
    assert sorted((r["n_sensors"], r["seed"]) for r in rows) == [
        (str(n), str(s)) for n in (3, 4, 5) for s in (0, 1)]
    run_dir = out / "custom-n3-s0"
    assert (run_dir / "trace.jsonl").exists() and (run_dir / "report.json").exists()
    assert len(list(run_dir.glob("snapshot-*.svg"))) == 1
    assert "custom-n5-s1" in capsys.readouterr().out


def test_report_command_matches_run_output(small, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(small), "--snapshots", "0", "-o", str(out), "--allow-nonterm"]) == 0
    capsys.readouterr()
    run_dir = out / "custom-n4-s0"
    assert main(["report", str(run_dir / "trace.jsonl")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads((run_dir / "report.json").read_text())


def test_nontermination_exit_code(small, tmp_path):
    out = tmp_path / "out"
    args = ["run", str(small), "--snapshots", "0", "--max-time", "5", "-o", str(out)]
    assert main(args) == 1
    assert main(args + ["--allow-nonterm"]) == 0


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text(textwrap.dedent("""\
        aoi: [[0, 0], [20, 0], [20, 20], [0, 20]]
        n_sensors: 4
        sensing_radius: 5
    """))
    assert main(["run", str(p), "-o", str(tmp_path / "o")]) == 2
    assert "line 3" in capsys.readouterr().err


def test_missing_trace_exit_code(tmp_path, capsys):
    assert main(["report", str(tmp_path / "nope.jsonl")]) == 2
    assert "nope.jsonl" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trace_file(tmp_path_factory):
    tr = run(preset("center80", 15, max_time=300.0), 0)
    path = tmp_path_factory.mktemp("tr") / "trace.jsonl"
    tr.write(path)
    return path, tr


def test_render_out_of_span(trace_file, tmp_path, capsys):
    path, tr = trace_file
    code = main(["render", str(path), "--times", "1,99999", "-o", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "99999" in err and f"[0.0, {tr.records[-1]['t']}]" in err
    assert list(tmp_path.glob("*.svg")) == []


def test_render_empty_layers(trace_file, tmp_path, capsys):
    path, _ = trace_file
    assert main(["render", str(path), "--times", "1", "--layers", ",", "-o", str(tmp_path)]) == 2
    assert "layer" in capsys.readouterr().err


def test_render_unknown_layer():
    with pytest.raises(RenderError):
        RenderSpec((1.0,), layers=frozenset({"sensors", "glitter"}))


def test_render_is_deterministic(trace_file, tmp_path):
    path, tr = trace_file
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["render", str(path), "--count", "3", "-o", str(a)]) == 0
    assert main(["render", str(path), "--count", "3", "-o", str(b)]) == 0
    names = sorted(p.name for p in a.glob("*.svg"))
    assert len(names) == 3
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_render_layers_and_roles(trace_file):
    _, tr = trace_file
    end = tr.records[-1]["last_event"]
    svg = render_svg(tr.records, end, RenderSpec((end,), layers=frozenset({"sensors"})))
    assert svg.count('class="sensor') == 15
    assert 'class="hex"' not in svg and 'class="aoi"' not in svg
    views = state_at(tr.records, end)
    assert len(views) == 15 and any(v.role == "snapped" for v in views)
