import re

import pytest

from aqmrd import cli
from aqmrd.experiments import (
    CSV_COLUMNS,
    SWEEP_COLUMNS,
    CompareError,
    ConfigError,
    aggregate_sweep,
    compare_report,
    expand,
    fmt,
    make_config,
    parse_config_text,
    parse_int_list,
    read_csv,
    render_csv,
    sweep_config,
)
from aqmrd.sim import InvariantError

FAST = {"duration": "0.5", "seeds": "1"}


# -- config --------------------------------------------------------------------


def test_cartesian_expansion_count():
    cfg = make_config({"disciplines": "red,aqmrd", "n_sources": "25,50,75,100", "seeds": "1-5"})
    specs = expand(cfg)
    assert len(specs) == 2 * 4 * 5
    keys = [(s.discipline, s.n_sources, s.seed) for s in specs]
    assert keys == sorted(keys)


def test_min_th_defaults_to_a_third_of_max_th():
    cfg = make_config({"max_th": "36"})
    assert expand(cfg)[0].gw.min_th == 12.0
    assert make_config({"max_th": "36", "min_th": "10"}).gateway(36, 64).min_th == 10.0


@pytest.mark.parametrize(
    "layer,field",
    [
        ({"disciplines": ""}, "disciplines"),
        ({"n_sources": ""}, "n_sources"),
        ({"disciplines": "red,codel"}, "disciplines"),
        ({"n_sources": "0"}, "n_sources"),
        ({"duration": "-1"}, "duration"),
        ({"x_factor": "4"}, "x_factor"),
        ({"w_q": "0"}, "w_q"),
        ({"above_mid_mode": "sometimes"}, "above_mid_mode"),
        ({"seeds": "one"}, "seeds"),
        ({"colour": "blue"}, "colour"),
    ],
)
def test_invalid_config_names_the_field(layer, field):
    with pytest.raises(ConfigError) as err:
        make_config(layer)
    assert err.value.field == field


def test_parse_helpers():
    assert parse_int_list("1,2,5-7") == [1, 2, 5, 6, 7]
    text = "# comment\nscheme = red, aqmrd  # trailing\nsources=25\n\nmax-th = 30\n"
    assert parse_config_text(text) == {"disciplines": "red, aqmrd", "n_sources": "25", "max_th": "30"}
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign here")


def test_layer_precedence():
    cfg = make_config({"n_sources": "25", "duration": "3"}, {"n_sources": "50"})
    assert cfg.n_sources == [50] and cfg.duration == 3.0


def test_config_hash_ignores_output_paths():
    a = make_config({"out": "a.csv"})
    b = make_config({"out": "b.csv", "jobs": "1"})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != make_config({"max_p": "0.2"}).config_hash()


# -- sweeps ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "param,attr,levels",
    [
        ("sources", "n_sources", [12, 25, 37, 50, 62, 75, 87, 100]),
        ("max_th", "max_th", [18, 24, 30, 36, 42, 48]),
        ("buffer", "buffer", [40, 60, 80, 100, 120, 140, 160]),
    ],
)
def test_sweep_levels(param, attr, levels):
    cfg = sweep_config(make_config(), param)
    assert getattr(cfg, attr) == levels
    assert len(expand(cfg)) == len(levels) * len(cfg.disciplines) * len(cfg.seeds)


def test_max_th_levels_are_evenly_spaced():
    levels = sweep_config(make_config(), "max_th").max_th
    assert {b - a for a, b in zip(levels, levels[1:])} == {6.0}


def test_unknown_sweep_param():
    with pytest.raises(ConfigError):
        sweep_config(make_config(), "w_q")


def test_aggregate_sweep_mean_and_median():
    rows = [
        {c: None for c in CSV_COLUMNS}
        | {"discipline": "red", "n_sources": 25, "seed": s, "max_th": 48.0, "min_th": 16.0,
           "buffer": 64, "duration": 1.0, "e_avg_pkts": v}
        for s, v in ((1, 1.0), (2, 2.0), (3, 9.0))
    ]
    (agg,) = aggregate_sweep(rows, "sources")
    assert agg["n_seeds"] == 3 and agg["value"] == 25
    assert agg["e_avg_pkts_mean"] == 4.0 and agg["e_avg_pkts_median"] == 2.0
    assert agg["loss_ratio_pct_mean"] is None
    assert set(SWEEP_COLUMNS) <= set(agg)


def test_sources_sweep_gives_eight_rows_per_discipline(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = cli.main(["sweep", "sources", "--scheme", "red,aqmrd", "--duration", "0.3",
                   "--seeds", "1", "--jobs", "1", "--out", str(out)])
    assert rc == 0
    rows = read_csv(out.read_text())
    for d in ("red", "aqmrd"):
        assert [r["value"] for r in rows if r["discipline"] == d] == [12, 25, 37, 50, 62, 75, 87, 100]


def test_max_th_sweep_defaults_to_75_sources(tmp_path):
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "max_th", "--scheme", "red", "--duration", "0.2", "--seeds", "1",
                     "--jobs", "1", "--out", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert {r["n_sources"] for r in rows} == {75.0}
    assert [r["value"] for r in rows] == [18, 24, 30, 36, 42, 48]


# -- CSV -------------------------------------------------------------------------


def test_fmt_six_significant_digits():
    assert fmt(0.0123456789) == "0.0123457"
    assert fmt(19999999.7) == "2e+07"
    assert fmt(3) == "3" and fmt(None) == ""


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    rc = cli.main(["run", "--scheme", "red,aqmrd", "--sources", "10,20", "--seeds", "1,2",
                   "--duration", "2", "--jobs", "1", "--out", str(out), *extra])
    return rc, out


def test_run_writes_schema_and_metadata(tmp_path):
    rc, out = _run(tmp_path, "r.csv")
    assert rc == 0
    lines = out.read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    assert any(ln.startswith("# config_hash=") for ln in meta)
    assert "# seeds=1,2" in meta and "# above_mid_mode=unit_prob" in meta
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0].split(",") == list(CSV_COLUMNS)
    assert len(body) == 1 + 2 * 2 * 2
    for ln in body[1:]:
        for cell in ln.split(",")[7:]:
            digits = re.sub(r"e[+-]\d+$", "", cell).replace(".", "").replace("-", "").lstrip("0")
            assert len(digits) <= 6


def test_rerun_is_byte_identical(tmp_path):
    _, a = _run(tmp_path, "a.csv")
    _, b = _run(tmp_path, "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_parallel_and_serial_agree(tmp_path):
    _, a = _run(tmp_path, "a.csv")
    _, b = _run(tmp_path, "b.csv", "--jobs", "2")
    assert a.read_bytes() == b.read_bytes()


def test_trace_files(tmp_path):
    rc, _ = _run(tmp_path, "r.csv", "--trace", str(tmp_path / "tr"))
    assert rc == 0
    files = sorted((tmp_path / "tr").glob("*.csv"))
    assert len(files) == 8
    text = files[0].read_text().splitlines()
    assert text[0] == "t,q,avg,davg,mid_th"
    assert len(text) == 1 + 201


def test_config_file_and_cli_precedence(tmp_path):
    conf = tmp_path / "exp.conf"
    conf.write_text("scheme = red\nsources = 10\nseeds = 1\nduration = 1\njobs = 1\n")
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--config", str(conf), "--sources", "12", "--out", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert [(r["discipline"], r["n_sources"], r["duration"]) for r in rows] == [("red", 12, 1.0)]


# -- exit codes ------------------------------------------------------------------


def test_config_error_exit_code_and_no_output(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--scheme", "", "--out", str(out)]) == 2
    assert "disciplines" in capsys.readouterr().err
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_argparse_errors_use_config_exit_code():
    with pytest.raises(SystemExit) as err:
        cli.main(["run", "--above-mid-mode", "nope"])
    assert err.value.code == 2


def test_missing_config_file(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "absent.conf")]) == 2


def test_invariant_violation_exit_code(tmp_path, monkeypatch, capsys):
    def broken(cfg):
        raise InvariantError("packet conservation failed")

    monkeypatch.setattr(cli, "run_scenario", broken)
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--out", str(out)]) == 3
    assert "conservation" in capsys.readouterr().err
    assert not out.exists()


# -- compare ---------------------------------------------------------------------


def _row(disc, n, seed, delay, loss):
    return {
        "discipline": disc, "n_sources": n, "seed": seed, "max_th": 48.0, "min_th": 16.0,
        "buffer": 64, "duration": 100.0, "throughput_bps": 2e7, "relative_throughput": 1.0,
        "mean_qdelay_s": delay, "e_avg_pkts": 30.0, "e_q_pkts": 31.0, "loss_ratio_pct": loss,
    }


def test_compare_shows_reduction_sign():
    rows = [_row("red", 100, s, 0.02571, 3.067) for s in (1, 2, 3)]
    rows += [_row("aqmrd", 100, s, 0.02115, 4.490) for s in (1, 2, 3)]
    report = compare_report(read_csv(render_csv(rows, CSV_COLUMNS)))
    assert "+17.74%" in report
    assert "+46.40%" in report


def test_compare_red_only_is_all_zero():
    report = compare_report([_row("red", n, 1, 0.02, 3.0) for n in (25, 50)])
    pct_lines = [ln for ln in report.splitlines() if ln.startswith("red") and "%" in ln]
    assert len(pct_lines) == 4
    assert all(set(ln.split()[1:]) == {"0%"} for ln in pct_lines)


def test_compare_without_red_fails():
    with pytest.raises(CompareError):
        compare_report([_row("aqmrd", 25, 1, 0.02, 3.0)])
    with pytest.raises(CompareError):
        compare_report([_row("red", 25, 1, 0.02, 3.0), _row("aqmrd", 25, 2, 0.02, 3.0)])


def test_compare_cli(tmp_path, capsys):
    _, out = _run(tmp_path, "r.csv")
    assert cli.main(["compare", str(out)]) == 0
    text = capsys.readouterr().out
    assert "with respect to RED" in text
    bad = tmp_path / "bad.csv"
    bad.write_text(render_csv([_row("aqmrd", 25, 1, 0.02, 3.0)], CSV_COLUMNS))
    assert cli.main(["compare", str(bad)]) == 2
