import csv
from pathlib import Path

import numpy as np
import pytest

from ptsbayes.cli import main
from ptsbayes.config import SCHEMA, load_config, parse_config
from ptsbayes.errors import ConfigError
from ptsbayes.filtering import arrival_posterior
from ptsbayes.inference import pmf_mean
from ptsbayes.pts_core import Uniform, propagate, stationary_cycle_start, vph_to_rate

FIXTURES = Path(__file__).parent / "fixtures"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


# -- config ------------------------------------------------------------------

def test_defaults():
    cfg = load_config()
    g = cfg.grid
    assert (g.delta_t, g.cycle_len, g.green_len, g.n_cycles) == (1.0, 90, 35, 40)
    assert cfg["demand.volume_vph"] == 720 and cfg["demand.phi"] == 0.1
    assert cfg["kernel.sigma_veh"] == 1.0 and cfg["kernel.half_width_veh"] == 2
    geom = cfg.geometry
    assert (geom.v_f, geom.s_jam, geom.lanes, geom.link_len) == (15.0, 7.5, 2, 250.0)


@pytest.mark.parametrize("text,line,fragment", [
    ("run.seed = 3\nsignal.cycel_s = 90\n", 2, "unknown key"),
    ("demand.phi = 0.1\n\ndemand.phi = 0.2\n", 3, "duplicate"),
    ("# comment\nkernel.sigma_veh = wide\n", 2, "bad value"),
    ("signal.green_s\n", 1, "key = value"),
])
def test_config_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "x.cfg")
    assert f"x.cfg:{line}:" in str(exc.value) and fragment in str(exc.value)


def test_config_validation():
    with pytest.raises(ConfigError):
        parse_config("signal.green_s = 95\n").validate()
    with pytest.raises(ConfigError):
        parse_config("demand.phi = 0\n").validate()


def test_canonical_round_trip():
    cfg = parse_config("demand.breakpoints_s = 0, 3600, 7200\ndemand.volumes_vph = 300,600,900\n"
                       "inference.grid_phi = 0.05:0.2:16\nrun.seed = 9\n").validate()
    again = parse_config(cfg.canonical()).validate()
    assert again.values == cfg.values and again.digest() == cfg.digest()
    assert set(again.values) == set(SCHEMA)


# -- simulate / encode ---------------------------------------------------------

def test_simulate_defaults_and_determinism(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "a"), "--trajectories"]) == 0
    assert main(["simulate", "--out", str(tmp_path / "b")]) == 0
    ma = summary(tmp_path / "a" / "manifest.txt")
    mb = summary(tmp_path / "b" / "manifest.txt")
    assert ma["cycles"] == "40" and ma["horizon_steps"] == "3600"
    truth = rows(tmp_path / "a" / "rep_000" / "truth.csv")
    assert len(truth) == 3600 and list(truth[0]) == ["t", "S", "A", "X"]
    assert len(rows(tmp_path / "a" / "rep_000" / "cycles.csv")) == 40
    assert (tmp_path / "a" / "rep_000" / "trajectories.csv").exists()
    a = (tmp_path / "a" / "rep_000" / "observations.csv").read_bytes()
    b = (tmp_path / "b" / "rep_000" / "observations.csv").read_bytes()
    assert a == b and ma["config_hash"] == mb["config_hash"]
    assert main(["simulate", "--out", str(tmp_path / "c"), "--seed", "7"]) == 0
    assert (tmp_path / "c" / "rep_000" / "observations.csv").read_bytes() != a


def test_encode_round_trip(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "s"), "--trajectories"]) == 0
    rep = tmp_path / "s" / "rep_000"
    out = tmp_path / "enc.csv"
    assert main(["encode", str(rep / "trajectories.csv"), "--out", str(out)]) == 0
    # default noise makes encoded queues differ from the simulated reports,
    # but the set of observed steps must match
    got = [r["a_tilde"] for r in rows(out)]
    want = [r["a_tilde"] for r in rows(rep / "observations.csv")]
    assert got == want


def test_encode_empty_and_malformed(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("vehicle_id,time_s,distance_m\n")
    assert main(["encode", str(empty), "--out", str(tmp_path / "o.csv")]) == 0
    assert all(r["a_tilde"] == "0" for r in rows(tmp_path / "o.csv"))
    bad = tmp_path / "bad.csv"
    bad.write_text("vehicle_id,time_s,distance_m\nv1,0.0,10\nv1,abc,12\n")
    assert main(["encode", str(bad), "--out", str(tmp_path / "o2.csv")]) == 2
    assert f"{bad}:3:" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2


# -- fit -----------------------------------------------------------------------

def test_fit_grid_and_map_agree(tmp_path):
    cfg = write_cfg(tmp_path, "inference.grid_mu_vph = 500:1000:41\n"
                              "inference.grid_phi = 0.02:0.3:41\n")
    obs = str(FIXTURES / "obs_1h.csv")
    assert main(["fit", obs, "--method", "grid", "--config", cfg, "--out", str(tmp_path / "g")]) == 0
    assert main(["fit", obs, "--method", "map", "--config", cfg, "--out", str(tmp_path / "m")]) == 0
    g = summary(tmp_path / "g" / "summary.txt")
    m = summary(tmp_path / "m" / "summary.txt")
    assert len(rows(tmp_path / "g" / "grid.csv")) == 41 * 41
    mu_cell, phi_cell = 500 / 40, 0.28 / 40
    assert abs(float(g["mu_0.map"]) - float(m["mu_0.map"])) <= mu_cell
    assert abs(float(g["phi.map"]) - float(m["phi.map"])) <= phi_cell


def test_fit_is_reports_ess(tmp_path):
    cfg = write_cfg(tmp_path, "inference.n_is = 300\ninference.n_starts = 2\n")
    assert main(["fit", str(FIXTURES / "obs_1h.csv"), "--method", "is", "--config", cfg,
                 "--out", str(tmp_path)]) == 0
    s = summary(tmp_path / "summary.txt")
    assert 15 < float(s["ess"]) <= 300
    post = rows(tmp_path / "posterior.csv")
    assert len(post) == 300 and list(post[0])[:5] == ["sample_id", "chain", "w", "log_lik", "phi"]
    lo, hi = (float(v) for v in s["mu_0.hdi95"].split(","))
    assert lo < float(s["mu_0.mean"]) < hi


def test_fit_degenerate_grid_exits_3(tmp_path):
    cfg = write_cfg(tmp_path, "inference.grid_phi = 0.001:0.004:4\n")
    assert main(["fit", str(FIXTURES / "obs_1h.csv"), "--method", "grid", "--config", cfg,
                 "--out", str(tmp_path)]) == 3


# -- filter --------------------------------------------------------------------

def test_filter_columns_and_prior_without_observations(tmp_path):
    none = tmp_path / "none.csv"
    none.write_text("t,a_tilde,x_tilde_s\n" + "".join(f"{t},0,\n" for t in range(1, 181)))
    assert main(["filter", str(none), "--out", str(tmp_path / "f.csv")]) == 0
    out = rows(tmp_path / "f.csv")
    assert list(out[0]) == ["t", "mean_queue", "p05", "p50", "p95", "a_hat", "loglik_cum"]
    mean = np.array([float(r["mean_queue"]) for r in out])
    # no reports at all is still evidence: arrivals are thinned to a(1-phi)/(1-a phi)
    cfg = load_config()
    grid = cfg.grid_for_cycles(2)
    a = float(vph_to_rate(720, 1.0))
    init = stationary_cycle_start(Uniform(a), grid).mass
    thinned = np.full(180, arrival_posterior(a, 0.1, 0))
    np.testing.assert_allclose(mean, pmf_mean(propagate(init, thinned, grid.signal())), atol=1e-9)
    assert all(int(r["p05"]) <= int(r["p50"]) <= int(r["p95"]) for r in out)


def test_filter_perfect_information_recovers_truth(tmp_path):
    cfg = write_cfg(tmp_path, "demand.phi = 1\nkernel.sigma_veh = 0\nkernel.half_width_veh = 0\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    rep = tmp_path / "s" / "rep_000"
    assert main(["filter", str(rep / "observations.csv"), "--config", cfg,
                 "--out", str(tmp_path / "f.csv")]) == 0
    truth = np.array([int(r["X"]) for r in rows(rep / "truth.csv")])
    est = np.array([float(r["mean_queue"]) for r in rows(tmp_path / "f.csv")])
    # exact once the first vehicle has been seen
    first = int(np.argmax(np.array([int(r["A"]) for r in rows(rep / "truth.csv")])))
    np.testing.assert_allclose(est[first:], truth[first:], atol=1e-9)


def test_filter_impossible_observations_exit_4(tmp_path):
    cfg = write_cfg(tmp_path, "kernel.sigma_veh = 0\nkernel.half_width_veh = 0\n")
    obs = tmp_path / "o.csv"
    obs.write_text("t,a_tilde,x_tilde_s\n1,1,3\n2,1,0\n" + "".join(f"{t},0,\n" for t in range(3, 91)))
    assert main(["filter", str(obs), "--config", cfg, "--out", str(tmp_path / "f.csv")]) == 4


# -- evaluate -------------------------------------------------------------------

@pytest.mark.slow
def test_evaluate_report(tmp_path):
    cfg = write_cfg(tmp_path, "experiment.replications = 3\ninference.n_is = 150\n"
                              "inference.n_starts = 1\nexperiment.curve_cycles = 100\n"
                              "experiment.curve_phis = 0.1, 0.5\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert main(["evaluate", str(tmp_path / "s")]) == 0
    ev = tmp_path / "s" / "evaluation"
    rep = rows(ev / "report.csv")
    assert {r["param"] for r in rep} == {"mu", "phi"}
    assert len(rows(ev / "max_queue.csv")) == 3
    curve = rows(ev / "mape_curve.csv")
    assert [float(r["phi"]) for r in curve] == [0.1, 0.5]
    assert float(curve[1]["mape"]) < float(curve[0]["mape"])
