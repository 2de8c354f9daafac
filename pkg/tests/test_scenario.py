import math
import random

import pytest

from calmrelay.model import mix_seed
from calmrelay.scenario import (
    Fixate,
    GazeGen,
    NodGen,
    NodOsc,
    RandomWalk,
    SaccadeScript,
    ScenarioConfig,
    ShakeOsc,
    Still,
    VelScript,
    cos_cycles,
    parse_behavior,
)


def test_fixate_zero_noise_exact():
    gen = GazeGen(Fixate(0.5, 0.5, 0.0), random.Random(0))
    for t in (0.0, 1.5, 100.0):
        assert gen.at(t) == (0.5, 0.5)


def test_saccade_waypoint_lookup():
    b = SaccadeScript(((0.0, 0.1, 0.1), (5.0, 0.9, 0.9)), sigma=0.0)
    gen = GazeGen(b, random.Random(0))
    assert gen.at(0.0) == (0.1, 0.1)
    assert gen.at(4.999) == (0.1, 0.1)
    assert gen.at(6.0) == (0.9, 0.9)


def test_fixate_law_of_large_numbers():
    gen = GazeGen(Fixate(0.3, 0.4, 0.01), random.Random(21))
    n = 10_000
    xs, ys = zip(*(gen.at(k / 30) for k in range(n)))
    assert abs(sum(xs) / n - 0.3) < 0.003
    assert abs(sum(ys) / n - 0.4) < 0.003


def test_fixate_jitter_clamped_to_unit_square():
    gen = GazeGen(Fixate(0.999, 0.001, 0.05), random.Random(3))
    for k in range(2000):
        x, y = gen.at(k / 30)
        assert 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0


def test_random_walk_accumulates_and_stays_clamped():
    gen = GazeGen(RandomWalk(sigma_step=0.05), random.Random(4))
    prev = (0.5, 0.5)
    moved = False
    for k in range(500):
        x, y = gen.at(k / 30)
        assert 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0
        if (x, y) != prev:
            moved = True
        prev = (x, y)
    assert moved


def test_nod_quarter_period_is_exactly_zero():
    gen = NodGen(NodOsc(freq_hz=2.0, amp=0.3), random.Random(0))
    vx, vy = gen.at(0.125)  # quarter period of 2 Hz
    assert (vx, vy) == (0.0, 0.0)
    # peak at t=0
    _, vy0 = gen.at(0.0)
    assert abs(vy0 - 0.3 * math.tau * 2.0) < 1e-12


def test_still_zero_noise():
    gen = NodGen(Still(0.0), random.Random(0))
    assert gen.at(0.0) == (0.0, 0.0)
    assert gen.at(5.0) == (0.0, 0.0)


def test_shake_mirrors_on_x_axis():
    nod = NodGen(NodOsc(2.0, 0.25), random.Random(0))
    shake = NodGen(ShakeOsc(2.0, 0.25), random.Random(0))
    for t in (0.0, 0.05, 0.11, 0.2):
        vng = nod.at(t)
        vsh = shake.at(t)
        assert vng[0] == 0.0 and vsh[1] == 0.0
        assert vng[1] == vsh[0]


def test_nod_integral_over_full_period_is_zero():
    # trapezoid quadrature of the velocity over exactly one period
    gen = NodGen(NodOsc(2.0, 0.3), random.Random(0))
    n = 10_000
    period = 0.5
    dt = period / n
    vals = [gen.at(k * dt)[1] for k in range(n + 1)]
    displacement = sum(
        (v0 + v1) * 0.5 * dt for v0, v1 in zip(vals, vals[1:])
    )
    assert abs(displacement) < 1e-9


def test_velocity_script_interpolates():
    gen = NodGen(VelScript(((0.0, 0.0, 0.0), (1.0, 2.0, -2.0))), random.Random(0))
    assert gen.at(-1.0) == (0.0, 0.0)
    assert gen.at(0.5) == (1.0, -1.0)
    assert gen.at(9.0) == (2.0, -2.0)


def test_cos_cycles_quarters():
    assert cos_cycles(0.25) == 0.0
    assert cos_cycles(0.75) == 0.0
    assert cos_cycles(1.25) == 0.0
    assert cos_cycles(0.0) == 1.0
    assert abs(cos_cycles(0.5) + 1.0) < 1e-15


def test_parse_behavior_dispatch():
    assert parse_behavior({"kind": "fixate", "x": 0.1, "y": 0.2}, "gaze") == Fixate(0.1, 0.2, 0.0)
    assert isinstance(parse_behavior({"kind": "nod", "freq_hz": 2, "amp": 0.1}, "nod"), NodOsc)
    with pytest.raises(ValueError):
        parse_behavior({"kind": "nod", "freq_hz": 2, "amp": 0.1}, "gaze")
    with pytest.raises(ValueError):
        parse_behavior({"kind": "fixate", "x": 0, "y": 0}, "nod")


def _scenario_dict(**over):
    d = {
        "room": "s1",
        "mode": "gaze",
        "n_audiences": 3,
        "duration_s": 2.0,
        "sample_hz": 30,
        "seed": 9,
        "behavior": {"kind": "fixate", "x": 0.3, "y": 0.4, "sigma": 0.01},
    }
    d.update(over)
    return d


def test_scenario_from_dict_broadcasts_single_behavior():
    cfg = ScenarioConfig.from_dict(_scenario_dict())
    assert len(cfg.behaviors) == 3
    assert cfg.n_samples() == 60


def test_scenario_behaviors_length_checked():
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict(
            _scenario_dict(behaviors=[{"kind": "fixate", "x": 0, "y": 0}])
        )


def test_scenario_streams_deterministic_from_seed():
    cfg1 = ScenarioConfig.from_dict(_scenario_dict())
    cfg2 = ScenarioConfig.from_dict(_scenario_dict())
    for idx in range(cfg1.n_audiences):
        assert list(cfg1.sample_stream(idx)) == list(cfg2.sample_stream(idx))
    # different audiences get independent jitter
    assert list(cfg1.sample_stream(0)) != list(cfg1.sample_stream(1))
    # a different seed changes the streams
    cfg3 = ScenarioConfig.from_dict(_scenario_dict(seed=10))
    assert list(cfg3.sample_stream(0)) != list(cfg1.sample_stream(0))


def test_scenario_stream_timestamps():
    cfg = ScenarioConfig.from_dict(_scenario_dict(sample_hz=30, duration_s=1.0))
    stream = list(cfg.sample_stream(0))
    assert len(stream) == 30
    assert stream[0][0] == 0
    assert stream[1][0] == 33
    assert all(b[0] > a[0] for a, b in zip(stream, stream[1:]))


def test_scenario_file_json_and_toml(tmp_path):
    jpath = tmp_path / "s.json"
    jpath.write_text(
        '{"room":"s1","mode":"nod","n_audiences":2,"duration_s":1.0,'
        '"seed":4,"behavior":{"kind":"nod","freq_hz":2,"amp":0.05},'
        '"assertions":[{"metric":"protocol_errors","max":0}]}'
    )
    cfg = ScenarioConfig.from_file(str(jpath))
    assert cfg.mode == "nod" and cfg.n_audiences == 2
    assert cfg.assertions == [{"metric": "protocol_errors", "max": 0}]

    tpath = tmp_path / "s.toml"
    tpath.write_text(
        'room = "s2"\nmode = "gaze"\nn_audiences = 1\nduration_s = 1.0\n'
        "seed = 5\n[behavior]\nkind = \"fixate\"\nx = 0.5\ny = 0.5\n"
    )
    cfg2 = ScenarioConfig.from_file(str(tpath))
    assert cfg2.room == "s2" and cfg2.behaviors[0] == Fixate(0.5, 0.5, 0.0)


def test_mix_seed_derived_generators_do_not_collide():
    cfg = ScenarioConfig.from_dict(_scenario_dict(n_audiences=2))
    g0 = cfg.generator(0)
    g1 = cfg.generator(1)
    assert g0.rng.getstate() != g1.rng.getstate()
    assert mix_seed(cfg.seed, 100) != mix_seed(cfg.seed, 101)
