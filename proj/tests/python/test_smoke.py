import os

import pytest

import mcmp

SCENARIOS = os.path.join(os.environ.get("MCMP_SOURCE_DIR", os.path.dirname(__file__) + "/../.."), "scenarios")


def scenario(name):
    return os.path.join(SCENARIOS, name + ".json")


def test_round_trip():
    for name in ("si_two_gap", "si_corridor", "di_corridor"):
        s = mcmp.load_scenario(scenario(name))
        assert mcmp.parse_scenario(s.serialize()) == s


def test_scenario_error_is_value_error():
    with pytest.raises(ValueError, match="/dimension"):
        mcmp.parse_scenario('{"dynamics": "single_integrator"}')


def test_estimates_are_consistent():
    s = mcmp.load_scenario(scenario("si_corridor"))
    vr = mcmp.estimate(s, "vr", particles=2000, seed=3)
    simple = mcmp.estimate(s, "simple", particles=20000, seed=3)
    assert vr["method"] == "vr"
    assert abs(vr["p_hat"] - simple["p_hat"]) < 4 * (vr["std_err"] ** 2 + simple["std_err"] ** 2) ** 0.5
    assert mcmp.estimate(s, "additive") > 5 * vr["p_hat"]
    assert mcmp.estimate(s, "vr", particles=2000, seed=3) == vr


def test_plan_meets_target():
    s = mcmp.load_scenario(scenario("si_corridor"))
    r = mcmp.plan(s, seed=1)
    assert r["status"] == "met_tolerance"
    assert r["cp"]["p_hat"] <= s.alpha
    assert len(r["waypoints"]) > 10


def test_discretize_shapes():
    import numpy as np

    A, B, C, V, W = mcmp.discretize(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2), np.eye(2), 0.5)
    assert np.allclose(A, np.eye(2))
    assert np.allclose(B, 0.5 * np.eye(2))
    assert np.allclose(W, 2.0 * np.eye(2))


def test_cli_exit_codes():
    code, out, err = mcmp.run_cli(["--scenario", scenario("si_corridor"), "--bogus", "estimate"])
    assert code == 2 and "Usage" in err
    code, out, err = mcmp.run_cli(["--scenario", "/nonexistent.json", "estimate"])
    assert code == 3
    code, out, err = mcmp.run_cli(["--scenario", scenario("si_corridor"), "--particles", "500", "estimate"])
    assert code == 0 and out.startswith("method,waypoints,particles,p_hat,std_err,wall_ms\n")
