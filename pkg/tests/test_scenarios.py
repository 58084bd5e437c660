import numpy as np
import pytest
import yaml

from semantic_vtr.harness import Configs, ExperimentConfig, TaughtTrajectory, teach
from semantic_vtr.scenarios import (
    ARENA_OBJECTS,
    LOOP_PERIOD,
    SCENARIOS,
    arena_rearrangement,
    experiment,
    export_scenario,
    get_scenario,
    scenario_configs,
)
from semantic_vtr.simulator import load_world, perturb_world


def test_arena_layout():
    sc = get_scenario("arena")
    assert len(sc.world.objects) == len(ARENA_OBJECTS) == 18
    assert sc.world.arena == (0.0, 0.0, 10.0, 6.0)
    assert len(sc.world.occluders) == 1
    mem = teach(sc.world, sc.trajectory, sc.configs, seed=0)
    assert len(mem) == 290
    assert all(sc.world.contains(x, y, 0.3) for x, y, _ in sc.trajectory.waypoints)


def test_arena_rearrangement():
    p = arena_rearrangement()
    assert len(p.remove) == 5 and len(p.move) == 8
    assert len(perturb_world(get_scenario("arena").world, p).objects) == 13


def test_loop_halves_are_identical():
    sc = get_scenario("loop")
    mem = teach(sc.world, sc.trajectory, sc.configs, seed=0)
    kf_spacing = 0.03 * sc.configs.keyframe_period
    shift = int(round(LOOP_PERIOD / kf_spacing))
    assert len(mem) > shift
    for k in range(len(mem) - shift):
        assert mem.keyframes[k] == mem.keyframes[k + shift]


def test_scenario_configs():
    c = scenario_configs(keyframe_period=3)
    assert c.match.alpha == 2.0 and c.reloc.gamma == 30.0 and c.keyframe_period == 3
    assert Configs().match.alpha == 4.0 and Configs().reloc.gamma == 10.0


def test_experiment_presets():
    e = experiment("arena", "rearranged", trials=3, base_seed=4)
    assert e.trial_seeds() == [4, 5, 6]
    assert e.start_radius == 0.5 and e.perturbation is not None
    assert experiment("arena", "random_start").start_yaw_spread is None
    with pytest.raises(KeyError):
        get_scenario("maze")
    with pytest.raises(KeyError):
        experiment("loop", "nominal")


@pytest.mark.parametrize("name", SCENARIOS)
def test_export(tmp_path, name):
    sc = get_scenario(name)
    paths = export_scenario(name, tmp_path)
    names = {p.name for p in paths}
    assert {"world.yaml", "trajectory.csv", "config.yaml"} <= names
    assert load_world(tmp_path / "world.yaml") == sc.world
    t = TaughtTrajectory.from_csv(tmp_path / "trajectory.csv")
    assert np.array_equal(t.waypoints, sc.trajectory.waypoints)
    assert Configs.load(tmp_path / "config.yaml") == sc.configs
    for preset, kw in sc.experiments.items():
        e = ExperimentConfig.load(tmp_path / f"experiment_{preset}.yaml")
        assert e.configs == sc.configs
        assert e.trials == kw.get("trials", 12)
        assert e.start_radius == kw["start_radius"]
        assert e.perturbation == kw.get("perturbation")
        assert yaml.safe_load((tmp_path / f"experiment_{preset}.yaml").read_text())["world"] == "world.yaml"
