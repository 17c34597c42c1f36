import math

import pytest

import torusdyn


def test_doubling_map_basics():
    f = torusdyn.Map({"family": "doubling", "multiplier": 2})
    assert f.dimension == 1
    assert f.degree == 2
    assert f.evaluate([0.3]) == pytest.approx([0.6])
    assert f.evaluate([0.7]) == pytest.approx([0.4])
    assert f.derivative([0.1]) == [[2.0]]
    assert sorted(p[0] for p in f.preimages([0.5])) == pytest.approx([0.25, 0.75])


def test_bad_descriptor_raises():
    with pytest.raises(torusdyn.TorusdynError):
        torusdyn.Map({"family": "nope"})


def test_periodic_points_of_doubling():
    f = torusdyn.Map({"family": "doubling"})
    orbits = torusdyn.periodic_points(f, period=2)
    points = sorted(round(o["point"][0], 9) for o in orbits)
    assert points == pytest.approx([0.0, 1 / 3, 2 / 3])
    assert all(o["classification"] == "source" for o in orbits)


def test_induced_map_and_sampling():
    f = torusdyn.Map({"family": "doubling"})
    F = torusdyn.build_induced(f, [0.0], max_R=3, cell_budget=300)
    assert F.ell == 6
    assert F.return_times()[:2] == [1, 2]
    assert F.certify_markov(8)
    points, cells = torusdyn.sample_mu_a(F, 2000, seed=3)
    assert len(points) == len(cells) == 2000
    assert all(0.0 <= p[0] < 1.0 for p in points)
    again, _ = torusdyn.sample_mu_a(F, 2000, seed=3)
    assert again == points


def test_lebesgue_lyapunov():
    f = torusdyn.Map({"family": "linear_expanding", "matrix": [[3, 0], [0, 2]]})
    ex = torusdyn.lyapunov_lebesgue(f, n_iterates=200, n_samples=4)
    assert ex == pytest.approx([math.log(3), math.log(2)], rel=1e-9)


def test_run_experiment_dependency_error():
    r = torusdyn.run_experiment({"map": {"family": "doubling"}, "stages": ["map", "stats"], "output_dir": ""})
    assert r["exit_code"] == 3
    assert "measures" in r["diagnostic"]


def test_run_experiment_validation():
    with pytest.raises(torusdyn.TorusdynError):
        torusdyn.run_experiment({"map": {"family": "doubling"}, "stages": ["map"], "density": {"eps": -1}})
