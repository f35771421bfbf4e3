import json

import numpy as np
import pytest

from auctionvi import __version__
from auctionvi.bidspace import PwlBid, norm_L2
from auctionvi.cli import load_bid, main, rate_report, read_config
from auctionvi.priors import Prior


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def load(path):
    with open(path) as fh:
        return json.load(fh)


class TestBne:
    @pytest.mark.parametrize("rule", ["fpa", "spa"])
    def test_outputs(self, tmp_path, rule):
        assert run(tmp_path, "bne", "--rule", rule) == 0
        data = load(tmp_path / f"bne_{rule}.json")
        assert data["version"] == __version__ and data["config"]["rule"] == rule
        assert data["vi_residual"] <= 1e-8
        lines = (tmp_path / f"bne_{rule}.csv").read_text().splitlines()
        assert lines[0] == f"# auctionvi {__version__}" and lines[1].startswith("# config: ")
        assert len(lines) == 3 + 1025
        bid = load_bid(str(tmp_path / f"bne_{rule}.csv"), None, rule, 0.0, None)
        slope = 0.5 if rule == "fpa" else 1.0
        assert np.max(np.abs(bid.values - slope * bid.knots)) <= 1e-15

    def test_missing_rule(self, tmp_path):
        assert run(tmp_path, "bne") == 2

    def test_unsupported_prior(self, tmp_path):
        assert run(tmp_path, "bne", "--rule", "fpa", "--prior", "power:2") == 2

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        assert run(a, "flow", "--rule", "fpa", "--resolution", "11", "--trajectories", "3", "--seed", "4") == 0
        assert run(b, "flow", "--rule", "fpa", "--resolution", "11", "--trajectories", "3", "--seed", "4") == 0
        for name in ("flow_fpa.csv", "minty_fpa.csv", "flow_fpa.json", "flow_fpa.svg"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestConfig:
    def test_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nrule = spa\ngrid-size = 33\ndelta = 0.05\n")
        assert read_config(cfg) == {"rule": "spa", "grid": "33", "delta": "0.05"}
        assert run(tmp_path, "bne", "--config", str(cfg), "--grid-size", "17") == 0
        data = load(tmp_path / "bne_spa.json")
        assert data["config"]["grid"] == 17 and data["config"]["delta"] == 0.05
        assert len(data["bid"]["knots"]) == 17

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = red\n")
        assert run(tmp_path, "bne", "--config", str(cfg), "--rule", "spa") == 2

    def test_missing_file(self, tmp_path):
        assert run(tmp_path, "bne", "--config", str(tmp_path / "nope.cfg"), "--rule", "spa") == 2

    def test_env_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AUCTIONVI_OUT", str(tmp_path))
        assert main(["bne", "--rule", "spa", "--grid-size", "9"]) == 0
        assert (tmp_path / "bne_spa.csv").exists()


class TestCheck:
    def test_default_counterexample(self, tmp_path):
        assert run(tmp_path, "check", "--rule", "spa") == 0
        rep = load(tmp_path / "check_spa.json")["quasi_monotonicity"]
        assert rep["verdict"] == "violates_quasi"

    def test_fpa_counterexample(self, tmp_path):
        assert run(tmp_path, "check", "--rule", "fpa", "--counterexample", "fpa-prop") == 0
        assert load(tmp_path / "check_fpa.json")["quasi_monotonicity"]["verdict"] == "violates_quasi"

    def test_rule_mismatch(self, tmp_path):
        assert run(tmp_path, "check", "--rule", "fpa", "--counterexample", "spa-prop") == 2

    def test_family(self, tmp_path):
        assert run(tmp_path, "check", "--rule", "fpa", "--minty", "family:5") == 0
        rep = load(tmp_path / "check_fpa.json")["minty"]
        assert rep["residual"] == pytest.approx(0.0026785714285714277, abs=1e-13)

    def test_sweeps(self, tmp_path):
        assert run(tmp_path, "check", "--rule", "spa", "--minty", "sweep", "--monotonicity", "sweep",
                   "--count", "30") == 0
        rep = load(tmp_path / "check_spa.json")
        assert rep["minty"]["max_residual"] <= 1e-8
        assert sum(rep["monotonicity_sweep"]["counts"].values()) == 30

    def test_bad_minty(self, tmp_path):
        assert run(tmp_path, "check", "--rule", "fpa", "--minty", "bogus") == 2


class TestFlow:
    def test_fpa(self, tmp_path):
        assert run(tmp_path, "flow", "--rule", "fpa", "--resolution", "21", "--trajectories", "4") == 0
        rep = load(tmp_path / "flow_fpa.json")
        assert rep["stationary"] == [[0.5, 0.5]] and rep["violated_cells"] > 0
        assert all(t["status"] == "converged" and t["distance"] <= 1e-3 for t in rep["trajectories"])
        for name in ("flow_fpa.csv", "minty_fpa.csv", "flow_fpa.svg"):
            assert (tmp_path / name).exists()

    def test_empty_range(self, tmp_path):
        assert run(tmp_path, "flow", "--rule", "spa", "--b1-range", "1.5:2", "--b2-range", "1.5:2",
                   "--resolution", "3") == 2


class TestLearn:
    def test_fpa_from_identity(self, tmp_path):
        assert run(tmp_path, "learn", "--rule", "fpa", "--start", "identity", "--grid-size", "65") == 0
        rep = load(tmp_path / "learn_fpa_final.json")
        assert rep["status"] == "converged"
        assert norm_L2(PwlBid.from_dict(rep["final"]) - PwlBid.linear(0.5), Prior.uniform(2)) <= 1e-3

    def test_from_bne_file(self, tmp_path):
        assert run(tmp_path, "bne", "--rule", "fpa", "--grid-size", "33") == 0
        path = str(tmp_path / "bne_fpa.json")
        assert run(tmp_path, "learn", "--rule", "fpa", "--start", path) == 0
        rep = load(tmp_path / "learn_fpa_final.json")
        assert rep["status"] == "converged" and rep["iterations"] == 1

    def test_iteration_cap_is_not_an_error(self, tmp_path):
        assert run(tmp_path, "learn", "--rule", "fpa", "--start", "identity", "--grid-size", "33",
                   "--max-iters", "2") == 0
        assert load(tmp_path / "learn_fpa_final.json")["status"] == "max_iters_reached"


class TestOdea:
    def test_small_run(self, tmp_path):
        assert run(tmp_path, "odea", "--rule", "spa", "--K", "40", "--grid-size", "65", "--gap-every", "10") == 0
        rep = load(tmp_path / "odea_spa_final.json")
        assert rep["rate"]["k"] == [10, 20, 30, 40]
        assert rep["distance_trend"][-1] < rep["distance_trend"][0]
        lines = (tmp_path / "odea_spa.csv").read_text().splitlines()
        assert lines[2] == "k,dual_grad_norm,distance,criterion,restricted_gap" and len(lines) == 3 + 41

    def test_fpa_note(self, tmp_path):
        assert run(tmp_path, "odea", "--rule", "fpa", "--K", "2", "--grid-size", "9") == 0
        assert "no MVI solution" in load(tmp_path / "odea_fpa_final.json")["note"]

    def test_bad_alpha(self, tmp_path):
        assert run(tmp_path, "odea", "--rule", "spa", "--K", "2", "--grid-size", "9", "--alpha", "0.5") == 2

    def test_rate_report(self):
        rep = rate_report({"1": 1.0, "4": 0.5, "16": 0.25})
        assert rep["C"] == pytest.approx(1.0) and rep["within_factor_2"]
        assert not rate_report({"1": 1.0, "100": 1.0})["within_factor_2"]
        assert rate_report({}) is None
