import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obstaclewatch.errors import SceneError
from obstaclewatch.geometry import PHONES, crest_width
from obstaclewatch.pipeline import ObstacleWatch
from obstaclewatch.signal_core import BeepConfig
from obstaclewatch.simulator import (MIC2_STRUCTURE_DELAY, Clutter, GroundTruth, Obstacle, Pose,
                                     Scene, Trajectory, _echo_lists, _echo_power, _Renderer,
                                     ground_truth_collision, mic_positions, obstacle_truth,
                                     ray_distance, scatterer_weights, strip_offsets,
                                     synthesize_ping, synthesize_walk)

BEEP = BeepConfig()
RES = BEEP.speed_of_sound / BEEP.sample_rate
ORIGIN = Pose((0.0, 0.0), 0.0)


class TestScene:
    def test_validation(self):
        with pytest.raises(SceneError):
            Obstacle((1.0, 0.0), 0.0)
        with pytest.raises(SceneError):
            Obstacle((1.0, 0.0), 0.2, reflectivity=1.5)
        with pytest.raises(SceneError):
            Scene(body_gap=0.01)
        with pytest.raises(SceneError):
            Clutter(-1.0, 0.1)

    def test_overlap(self):
        with pytest.raises(SceneError):
            synthesize_ping(Scene(obstacles=[Obstacle((0.2, 0.0), 0.3)]), ORIGIN, BEEP)

    def test_mic_layout(self):
        mic1, mic2 = mic_positions(Pose((1.0, 2.0), math.pi / 2), PHONES["S5"])
        np.testing.assert_allclose(mic2, [1.0, 2.0])
        np.testing.assert_allclose(mic1, [1.0, 2.141])

    def test_weights(self):
        u = strip_offsets(9)
        assert u.size == 9 and np.all(np.abs(u) < 1) and u[4] == 0.0
        w = scatterer_weights(9)
        assert w.mean() == pytest.approx(1.0) and np.argmax(w) == 4


class TestPing:
    def test_empty_scene_has_only_direct_and_body(self):
        frame = synthesize_ping(Scene(), ORIGIN, BEEP)
        end = int(math.ceil(2 * (0.12 + 0.141) / RES)) + BEEP.chirp_samples + 10
        assert np.max(np.abs(frame.mic1.samples[:BEEP.chirp_samples])) > 0.5
        assert np.max(np.abs(frame.mic1.samples[end:])) < 1e-9
        assert np.max(np.abs(frame.mic2.samples[end:])) < 1e-9

    def test_echo_components(self):
        scene = Scene(body_gap=0.1, static_clutter=[Clutter(3.0, 0.05)])
        ch1, ch2, obs = _echo_lists(scene, ORIGIN, BEEP)
        assert ch1[0] == (0.0, 1.0)
        assert ch2[0] == (MIC2_STRUCTURE_DELAY, 1.0)
        assert ch2[1][0] == pytest.approx(MIC2_STRUCTURE_DELAY + 0.2 / RES)
        assert ch2[1][1] == 0.5
        assert ch1[1][1] == pytest.approx(0.1 * ch2[1][1])      # 10x weaker copy on mic1
        assert (3.0 / RES, 0.05) in [(pytest.approx(d), a) for d, a in ch1]
        assert obs == []

    def test_2m_delay(self):
        scene = Scene(obstacles=[Obstacle((2.141, 0.0), 0.2)])
        _, _, obs = _echo_lists(scene, ORIGIN, BEEP)
        assert round(obs[0][0].min()) == round(2 * 2.0 / 343 * 192000) == 2239

    def test_2m_recovered(self):
        scene = Scene(obstacles=[Obstacle((2.141, 0.0), 0.2)])
        a = ObstacleWatch().analyze(synthesize_ping(scene, ORIGIN, BEEP))
        err = min(abs(p.geometric_distance - 2.0) for p in a.peaks)
        assert 2 * err <= RES

    def test_mic2_weaker(self):
        scene = Scene(obstacles=[Obstacle((2.141, 0.5), 0.2)])
        _, _, obs = _echo_lists(scene, ORIGIN, BEEP)
        assert obs[0][3].sum() < 0.31 * obs[0][1].sum()

    def test_seed_determinism(self):
        scene = Scene(obstacles=[Obstacle((3.0, 0.2), 0.2)], noise_snr_db=10)
        a = synthesize_ping(scene, ORIGIN, BEEP, np.random.default_rng(5))
        b = synthesize_ping(scene, ORIGIN, BEEP, np.random.default_rng(5))
        assert a.mic1.samples.tobytes() == b.mic1.samples.tobytes()
        assert a.mic2.samples.tobytes() == b.mic2.samples.tobytes()

    def test_noise_level(self):
        scene = Scene(obstacles=[Obstacle((3.0, 0.0), 0.2)], noise_snr_db=10)
        clean = synthesize_ping(Scene(obstacles=scene.obstacles), ORIGIN, BEEP).mic1.samples
        noisy = synthesize_ping(scene, ORIGIN, BEEP, np.random.default_rng(1)).mic1.samples
        renderer = _Renderer(BEEP, BEEP.ping_period_samples)
        _, _, obs = _echo_lists(scene, ORIGIN, BEEP)
        ref = _echo_power(renderer, obs[0][0], obs[0][1])
        assert np.var(noisy - clean) == pytest.approx(ref / 10, rel=0.05)

    @given(st.floats(0.8, 3.0), st.floats(-1.0, 1.0), st.floats(0.05, 0.3))
    @settings(max_examples=25)
    def test_reciprocity(self, d, bearing, radius):
        """Doubling every scene length doubles every echo path."""
        phone = PHONES["S5"]
        c = np.array([phone.l_mic, 0.0]) + d * np.array([math.cos(bearing), math.sin(bearing)])
        one = Scene(obstacles=[Obstacle(tuple(c), radius)], body_gap=0.1,
                    phone=phone, static_clutter=[Clutter(2.0, 0.1)])
        two = Scene(obstacles=[Obstacle(tuple(2 * c), 2 * radius)], body_gap=0.2,
                    phone=type(phone)("double", 2 * phone.l_mic), static_clutter=[Clutter(4.0, 0.1)])
        ch1a, ch2a, oa = _echo_lists(one, ORIGIN, BEEP)
        ch1b, ch2b, ob = _echo_lists(two, ORIGIN, BEEP)
        np.testing.assert_allclose(ob[0][0], 2 * oa[0][0])
        np.testing.assert_allclose(ob[0][2], 2 * oa[0][2])
        np.testing.assert_allclose([d for d, _ in ch1b[1:]], [2 * d for d, _ in ch1a[1:]])
        body = [d - MIC2_STRUCTURE_DELAY for d, _ in (ch2a[1], ch2b[1])]
        assert body[1] == pytest.approx(2 * body[0])

    def test_energy_and_crest_grow_with_radius(self):
        energies, widths = [], []
        renderer = _Renderer(BEEP, BEEP.ping_period_samples)
        for radius in (0.1, 0.3, 0.6):
            scene = Scene(obstacles=[Obstacle((2.641, 0.0), radius)])
            _, _, obs = _echo_lists(scene, ORIGIN, BEEP)
            energies.append(_echo_power(renderer, obs[0][0], obs[0][1]))
            a = ObstacleWatch().analyze(synthesize_ping(scene, ORIGIN, BEEP))
            peak = min(a.peaks, key=lambda p: abs(p.geometric_distance - 2.5))
            widths.append(crest_width(a.env1, peak, a.threshold))
        assert energies == sorted(energies) and len(set(energies)) == 3
        assert widths == sorted(widths) and widths[0] < widths[-1]


class TestWalk:
    def test_kinematics(self):
        scene = Scene(obstacles=[Obstacle((5.141, 0.0), 0.2)])
        traj = Trajectory.straight((0.0, 0.0), 0.0, 1.4, 12)
        frames, truth = synthesize_walk(scene, traj, BEEP)
        assert len(frames) == 12 and [f.frame_index for f in frames] == list(range(12))
        np.testing.assert_allclose(np.diff(truth.d1[:, 0]), -0.126, atol=1e-9)
        assert truth.d1[0, 0] == pytest.approx(5.0)
        assert truth.collision

    def test_static_paths_constant(self):
        scene = Scene(obstacles=[Obstacle((5.0, 1.0), 0.2)], static_clutter=[Clutter(2.5, 0.05)])
        a = _echo_lists(scene, Pose((0.0, 0.0)), BEEP)
        b = _echo_lists(scene, Pose((1.0, 0.3)), BEEP)
        assert a[0][:3] == b[0][:3] and a[1][:3] == b[1][:3]

    def test_seeded_walk_repeatable(self):
        scene = Scene(obstacles=[Obstacle((4.0, 0.0), 0.2)], noise_snr_db=20)
        traj = Trajectory.straight((0.0, 0.0), 0.0, 1.4, 3)
        f1, _ = synthesize_walk(scene, traj, BEEP, seed=9)
        f2, _ = synthesize_walk(scene, traj, BEEP, seed=9)
        f3, _ = synthesize_walk(scene, traj, BEEP, seed=10)
        assert all(a.mic1.samples.tobytes() == b.mic1.samples.tobytes() for a, b in zip(f1, f2))
        assert f1[0].mic1.samples.tobytes() != f3[0].mic1.samples.tobytes()

    def test_mismatch(self):
        traj = Trajectory.straight((0.0, 0.0), 0.0, 1.4, 3, ping_period=0.1)
        with pytest.raises(SceneError):
            synthesize_walk(Scene(), traj, BEEP)
        with pytest.raises(SceneError):
            synthesize_walk(Scene(), Trajectory(()), BEEP)
        with pytest.raises(SceneError):
            Trajectory((Pose((math.nan, 0.0)),))

    def test_truth_round_trip(self):
        scene = Scene(obstacles=[Obstacle((4.0, 0.5), 0.2)], static_clutter=[Clutter(2.4, 0.05)])
        _, truth = synthesize_walk(scene, Trajectory.straight((0.0, 0.0), 0.0, 1.4, 4), BEEP)
        back = GroundTruth.from_dict(truth.to_dict())
        np.testing.assert_allclose(back.bearing, truth.bearing)
        assert back.collision == truth.collision and back.clutter_distances == [1.2]

    def test_truth_bearing(self):
        obstacle = Obstacle((0.141 + 2.0 * math.cos(0.4), 2.0 * math.sin(0.4)), 0.2)
        d1, d2, bearing = obstacle_truth(obstacle, ORIGIN, PHONES["S5"])
        assert d1 == pytest.approx(2.0) and bearing == pytest.approx(0.4)
        assert d2 == pytest.approx(math.hypot(0.141 + 2 * math.cos(0.4), 2 * math.sin(0.4)))


class TestCollisionTruth:
    def _walk(self, offset, radius=0.3):
        scene = Scene(obstacles=[Obstacle((6.0, offset), radius)])
        return scene, Trajectory.straight((0.0, 0.0), 0.0, 1.4, 10)

    def test_head_on(self):
        assert ground_truth_collision(*self._walk(0.0))

    def test_clear_miss(self):
        assert not ground_truth_collision(*self._walk(0.3 + 0.25 + 0.5))

    def test_boundary_inclusive(self):
        assert ground_truth_collision(*self._walk(0.5 + 0.25, radius=0.5))
        assert not ground_truth_collision(*self._walk(0.5 + 0.25 + 1e-9, radius=0.5))

    def test_behind_does_not_count(self):
        scene = Scene(obstacles=[Obstacle((-3.0, 0.0), 0.3)])
        assert not ground_truth_collision(scene, Trajectory.straight((0.0, 0.0), 0.0, 1.4, 3))

    def test_needs_obstacle(self):
        with pytest.raises(SceneError):
            ground_truth_collision(Scene(), Trajectory.straight((0.0, 0.0), 0.0, 1.4, 3))

    def test_ray_distance(self):
        assert ray_distance((0, 0), (1, 0), (5, 2)) == pytest.approx(2.0)
        assert ray_distance((0, 0), (1, 0), (-3, 4)) == pytest.approx(5.0)
