import math

import numpy as np
import pytest

from atl import scenario_file as sfm
from atl.cli import build_parser, main
from atl.errors import ConfigError
from atl.trace_io import read_trace

from conftest import SCENARIOS

SHORT = ["--override", "integrator.t_end=0.5"]


def bpos():
    return str(SCENARIOS / "paper_iv_b_bpos.cfg")


def short_copy(src, dst, t_end=1.0, drop=("max_tail_growth",)):
    """Copy a scenario with a short horizon; tail-growth assertions need the full horizon."""
    lines = []
    for ln in (SCENARIOS / src).read_text().splitlines():
        if ln.startswith("t_end"):
            ln = f"t_end = {t_end}"
        if any(ln.startswith(d) for d in drop):
            continue
        lines.append(ln)
    dst.write_text("\n".join(lines) + "\n")
    return dst


# --- parsing --------------------------------------------------------------------

MINIMAL = """
[plant]
name = custom
[controller]
variant = known_direction_simplified
k = 1
sigma1 = 1
sigma2 = 1
lambdas = 1
[reference]
kind = constant
values = 0
[initial]
x0 = 0 0
"""


def test_unknown_key_and_section_are_rejected():
    with pytest.raises(ConfigError, match="unknown key controller.gain"):
        sfm.parse_text(MINIMAL.replace("lambdas = 1", "lambdas = 1\ngain = 3"), env={})
    with pytest.raises(ConfigError, match=r"unknown section \[extra\]"):
        sfm.parse_text(MINIMAL + "[extra]\na = 1\n", env={})
    with pytest.raises(ConfigError, match=r"missing section \[initial\]"):
        sfm.parse_text(MINIMAL.split("[initial]")[0], env={})


def test_overrides_are_section_qualified():
    sf = sfm.parse_text(MINIMAL, overrides=["controller.k=7"], env={})
    assert sfm.build_scenario(sf).controller.k == 7.0
    with pytest.raises(ConfigError, match="section.key=value"):
        sfm.parse_text(MINIMAL, overrides=["k=7"], env={})
    with pytest.raises(ConfigError, match="unknown key"):
        sfm.parse_text(MINIMAL, overrides=["controller.kk=7"], env={})


def test_semantic_errors_name_the_problem():
    sf = sfm.parse_text(MINIMAL, overrides=["controller.k=-1"], env={})
    with pytest.raises(ConfigError, match="k must be positive"):
        sfm.build_scenario(sf)
    sf = sfm.parse_text(MINIMAL, overrides=["controller.lambdas=-2"], env={})
    with pytest.raises(ConfigError, match="Hurwitz"):
        sfm.build_scenario(sf)
    sf = sfm.parse_text(MINIMAL, overrides=["initial.x0=0 0 0"], env={})
    with pytest.raises(ConfigError, match="initial state"):
        sfm.build_scenario(sf)


def test_default_step_comes_from_environment_when_unset():
    assert sfm.parse_text(MINIMAL, env={}).get("integrator", "h") == "0.001"
    sf = sfm.parse_text(MINIMAL, env={sfm.ENV_DEFAULT_H: "2e-3"})
    assert sfm.build_scenario(sf).h == 2e-3
    # an explicit h wins over the environment
    sf = sfm.parse_text(MINIMAL + "[integrator]\nh = 5e-4\n", env={sfm.ENV_DEFAULT_H: "2e-3"})
    assert sfm.build_scenario(sf).h == 5e-4


def test_environment_step_reaches_the_cli(tmp_path, monkeypatch):
    cfg = tmp_path / "minimal.cfg"
    cfg.write_text(MINIMAL + "[integrator]\nt_end = 0.1\n")
    monkeypatch.setenv(sfm.ENV_DEFAULT_H, "0.01")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "h = 0.01" in (tmp_path / "o" / "scenario.echo").read_text()
    assert len(read_trace(tmp_path / "o" / "trace.csv")) == 11


def test_table_fault_schedule():
    text = MINIMAL + "[faults]\nschedule = table\nswitches = 1\nrho = 1; 0.5\neps = 0; 0.01\n"
    sc = sfm.build_scenario(sfm.parse_text(text, env={}))
    assert sc.faults.switch_instants == (1.0,)
    assert sc.faults.evaluate(2.0)[0][0] == 0.5
    bad = MINIMAL + "[faults]\nschedule = table\nswitches = 1\nrho = 1; 1.5\n"
    with pytest.raises(ConfigError, match="PLOE"):
        sfm.build_scenario(sfm.parse_text(bad, env={}))


def test_parser_requires_a_subcommand_and_out():
    p = build_parser()
    with pytest.raises(SystemExit):
        p.parse_args([])
    with pytest.raises(SystemExit):
        p.parse_args(["run", "x.cfg"])


# --- run --------------------------------------------------------------------------

def test_run_writes_the_bundle(tmp_path):
    out = tmp_path / "run"
    assert main(["run", bpos(), "--out", str(out), *SHORT]) == 0
    for name in ("trace.csv", "metrics.txt", "certificate.txt", "scenario.echo"):
        assert (out / name).is_file()
    assert "verdict: UniformlyPositive" in (out / "certificate.txt").read_text()
    trace = read_trace(out / "trace.csv")
    assert len(trace) == 2001  # 0.5 s at h = 2.5e-4
    assert (out / "trace.csv").read_text().splitlines()[0].startswith("t,x_1_1,x_1_2,x_2_1,x_2_2,y_star_1")


def test_bad_override_exits_one(tmp_path, capsys):
    assert main(["run", bpos(), "--out", str(tmp_path), "--override", "controller.k=-1"]) == 1
    assert "k must be positive" in capsys.readouterr().out


def test_mis_signed_known_direction_law_exits_two(tmp_path, capsys):
    code = main(["run", str(SCENARIOS / "negative" / "mis_signed_simplified.cfg"), "--out", str(tmp_path)])
    assert code == 2
    text = capsys.readouterr().out
    assert "Diverged at t=" in text
    assert "verdict_time:" in (tmp_path / "metrics.txt").read_text()


def test_failed_assertion_exits_four(tmp_path):
    code = main(["run", bpos(), "--out", str(tmp_path), *SHORT, "--override", "outputs.max_band=1e-9"])
    assert code == 4
    assert "assert steady_band: FAIL" in (tmp_path / "metrics.txt").read_text()


def test_csv_round_trip_is_exact(tmp_path):
    from atl.simulate import run
    sc = sfm.build_scenario(sfm.load(bpos(), ["integrator.t_end=0.2"], env={}))
    tr = run(sc)
    from atl.trace_io import write_trace
    write_trace(tr, tmp_path / "t.csv")
    back = read_trace(tmp_path / "t.csv")
    assert np.array_equal(back.data, tr.data, equal_nan=True)
    assert back.columns == tr.columns


def test_echo_rerun_is_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", bpos(), "--out", str(first), *SHORT]) == 0
    echo = first / "scenario.echo"
    assert main(["run", str(echo), "--out", str(second)]) == 0
    assert (first / "trace.csv").read_bytes() == (second / "trace.csv").read_bytes()
    assert echo.read_text() == (second / "scenario.echo").read_text()


def test_probe_output_when_requested(tmp_path):
    code = main(["run", bpos(), "--out", str(tmp_path), *SHORT,
                 "--override", "outputs.probe=true", "--override", "outputs.probe_horizons=10 20 30"])
    assert code == 0
    assert "GainOverflow" in (tmp_path / "probe.txt").read_text()  # default 1e12 cap is hit near zeta 20


# --- certify & probe -----------------------------------------------------------------

def test_certify_indefinite_gain(tmp_path, capsys):
    cfg = str(SCENARIOS / "certify" / "indefinite_gain.cfg")
    code = main(["certify", cfg, "--alpha", str(SCENARIOS / "certify" / "full_cos_range.alpha"),
                 "--out", str(tmp_path / "a")])
    assert code == 3
    text = (tmp_path / "a" / "certificate.txt").read_text()
    line = next(ln for ln in text.splitlines() if ln.startswith("witness_state"))
    x = [float(v) for v in line.split()[1:]]
    assert math.cos(x[0] * x[2]) > 0.42
    code = main(["certify", cfg, "--alpha", str(SCENARIOS / "certify" / "indefinite_gain_alpha.alpha"),
                 "--out", str(tmp_path / "b")])
    assert code == 0
    assert "UniformlyPositive" in (tmp_path / "b" / "certificate.txt").read_text()
    capsys.readouterr()


def test_certify_identity_reports_two(tmp_path, capsys):
    cfg = str(SCENARIOS / "certify" / "identity.cfg")
    assert main(["certify", cfg, "--out", str(tmp_path), "--box", "x_1_1=-1:1:5", "--box", "t=0:1:3"]) == 0
    assert "lambda_lower: 2" in capsys.readouterr().out


def test_certify_along_trace(tmp_path, capsys):
    code = main(["certify", bpos(), "--alpha", "two_channel", "--trace", "--out", str(tmp_path),
                 "--override", "integrator.t_end=0.5"])
    assert code == 0
    code = main(["certify", bpos(), "--trace", "--out", str(tmp_path), "--override", "integrator.t_end=4"])
    assert code == 3  # identity alpha: g rho + rho g^T alone is indefinite after the t = 3 fault
    capsys.readouterr()


def test_certify_config_errors(tmp_path, capsys):
    cfg = str(SCENARIOS / "certify" / "identity.cfg")
    assert main(["certify", cfg, "--out", str(tmp_path)]) == 1  # neither box nor trace
    assert main(["certify", cfg, "--out", str(tmp_path), "--box", "y=1"]) == 1
    assert main(["certify", cfg, "--out", str(tmp_path), "--alpha", "two_channel", "--box", "t=0"]) == 0
    assert main(["certify", cfg, "--out", str(tmp_path), "--alpha", "planar_3link", "--box", "t=0"]) == 1
    capsys.readouterr()


@pytest.mark.parametrize("args,code,verdict", [
    (["exp_quad_cos", "--horizons", "20 40 60 80"], 0, "ConsistentWithB"),
    (["quad_sin", "--horizons", "20 60 100 200", "--target", "2"], 0, "ConsistentWithBL"),
    (["exp_sin", "--horizons", "20 40 60"], 0, "ConsistentWithBL"),
    (["constant"], 3, "Inconsistent"),
    (["exp_quad_cos", "--cap", "1e12"], 3, "GainOverflow"),
])
def test_probe_exit_codes(tmp_path, capsys, args, code, verdict):
    assert main(["probe-nussbaum", *args, "--out", str(tmp_path)]) == code
    assert verdict in (tmp_path / "probe.txt").read_text()
    capsys.readouterr()


def test_probe_config_error(tmp_path, capsys):
    assert main(["probe-nussbaum", "exp_sin", "--horizons", "10 5", "--out", str(tmp_path)]) == 1
    capsys.readouterr()


# --- batch ------------------------------------------------------------------------

def test_empty_batch_exits_one(tmp_path, capsys):
    assert main(["batch", str(tmp_path), "--out", str(tmp_path / "o")]) == 1
    capsys.readouterr()


def test_batch_over_both_directions(tmp_path, capsys):
    d = tmp_path / "pair"
    d.mkdir()
    short_copy("paper_iv_b_bpos.cfg", d / "bpos.cfg")
    short_copy("paper_iv_b_bneg.cfg", d / "bneg.cfg")
    assert main(["batch", str(d), "--out", str(tmp_path / "o"), "--parallel", "2"]) == 0
    rows = (tmp_path / "o" / "summary.tsv").read_text().splitlines()
    assert rows[0].split("\t")[:3] == ["scenario", "exit", "verdict"]
    assert sorted(r.split("\t")[0] for r in rows[1:]) == ["paper_iv_b_bneg", "paper_iv_b_bpos"]
    assert all(r.split("\t")[1] == "0" for r in rows[1:])
    capsys.readouterr()


def test_batch_isolates_a_diverging_run(tmp_path, capsys):
    d = tmp_path / "mixed"
    d.mkdir()
    short_copy("paper_iv_b_bpos.cfg", d / "good.cfg")
    (d / "bad.cfg").write_text((SCENARIOS / "negative" / "mis_signed_simplified.cfg").read_text())
    (d / "broken.cfg").write_text("[plant]\nname = nope\n")
    code = main(["batch", str(d), "--out", str(tmp_path / "o")])
    assert code == 2
    rows = {r.split("\t")[0]: r.split("\t") for r in (tmp_path / "o" / "summary.tsv").read_text().splitlines()[1:]}
    assert rows["paper_iv_b_bpos"][1] == "0"
    assert rows["mis_signed_simplified"][1] == "2"
    assert rows["broken"][1] == "1"
    assert (tmp_path / "o" / "good" / "trace.csv").is_file()
    assert "first failure" in capsys.readouterr().err
