import numpy as np
import pytest

from mstrack.exceptions import InvalidSpec
from mstrack.kinematics import MotionModel, SensorModel
from mstrack.scenario import (ScenarioSpec, TargetSpec, generate_frame, generate_frames,
                              generate_truth)


def sensor(pd=1.0):
    return SensorModel(np.eye(2, 4), np.eye(2), pd, 1.0, ((0.0, 0.0), (100.0, 100.0)))


def spec(targets, n=10, motion=None, pd=1.0, clutter=0.0, noise=False):
    motion = motion or MotionModel.constant_velocity(1.0, 0.1, 0.99)
    return ScenarioSpec(n, motion, sensor(pd), clutter, targets, noise)


class TestTruth:
    def test_static(self):
        m = MotionModel(np.eye(4), np.zeros((4, 4)), 1.0)
        (t,) = generate_truth(spec([TargetSpec(0, 9, (5.0, 5.0, 0.0, 0.0))], motion=m), 1)
        assert t.states.shape == (10, 4)
        assert np.all(t.states == t.states[0])

    def test_crossing_minimum_at_five(self):
        # both targets reach (50, 50) at frame 5
        ts = [TargetSpec(0, 10, (0.0, 0.0, 10.0, 10.0)), TargetSpec(0, 10, (100.0, 0.0, -10.0, 10.0))]
        a, b = generate_truth(spec(ts, n=11), 0)
        d = np.linalg.norm(a.states[:, :2] - b.states[:, :2], axis=1)
        assert int(np.argmin(d)) == 5 and d[5] == pytest.approx(0.0, abs=1e-12)

    def test_invalid(self):
        with pytest.raises(InvalidSpec):
            generate_truth(spec([TargetSpec(5, 4, (0.0, 0.0, 0.0, 0.0))]), 0)
        with pytest.raises(InvalidSpec):
            generate_truth(spec([TargetSpec(0, 4, (0.0, 0.0))]), 0)

    def test_seeded_noise(self):
        s = spec([TargetSpec(0, 9, (5.0, 5.0, 1.0, 0.0))], noise=True)
        a, b, c = generate_truth(s, 3), generate_truth(s, 3), generate_truth(s, 4)
        assert np.array_equal(a[0].states, b[0].states)
        assert not np.array_equal(a[0].states, c[0].states)

    def test_alive_window(self):
        (t,) = generate_truth(spec([TargetSpec(2, 4, (5.0, 5.0, 1.0, 0.0))]), 0)
        assert [t.alive(k) for k in range(6)] == [False, False, True, True, True, False]


class TestFrames:
    two = [TargetSpec(0, 9, (10.0, 10.0, 1.0, 0.0)), TargetSpec(0, 9, (60.0, 60.0, 0.0, 1.0))]

    def test_all_detected(self):
        truth = generate_truth(spec(self.two), 0)
        fr = generate_frame(truth, 3, sensor(1.0), 0.0, seed=1)
        assert len(fr.measurements) == 2
        assert [m.id.index for m in fr.measurements] == [0, 1]
        assert all(m.id.frame == 3 for m in fr.measurements)

    def test_none_detected(self):
        truth = generate_truth(spec(self.two), 0)
        assert generate_frame(truth, 3, sensor(0.0), 0.0, seed=1).measurements == []

    def test_out_of_view_not_detected(self):
        truth = generate_truth(spec([TargetSpec(0, 9, (150.0, 10.0, 0.0, 0.0))]), 0)
        assert generate_frame(truth, 0, sensor(1.0), 0.0).measurements == []

    def test_clutter_rate(self):
        s = sensor(1.0)
        counts = [len(generate_frame([], k, s, 5.0, seed=11).measurements) for k in range(1000)]
        # Poisson(5): the mean of 1000 draws has standard deviation sqrt(5 / 1000)
        assert abs(np.mean(counts) - 5.0) < 3 * np.sqrt(5.0 / 1000)
        pts = np.array([m.z for k in range(50) for m in generate_frame([], k, s, 5.0, 2).measurements])
        assert pts.min() >= 0.0 and pts.max() <= 100.0

    def test_detection_rate(self):
        pd, n = 0.7, 2000
        truth = generate_truth(spec([TargetSpec(0, n, (50.0, 50.0, 0.0, 0.0))], n=n,
                                    motion=MotionModel(np.eye(4), np.zeros((4, 4)), 1.0)), 0)
        hits = sum(len(generate_frame(truth, k, sensor(pd), 0.0, 5).measurements) for k in range(n))
        assert abs(hits / n - pd) < 3 * np.sqrt(pd * (1 - pd) / n)

    def test_measurement_noise(self):
        truth = generate_truth(spec([TargetSpec(0, 9, (50.0, 50.0, 0.0, 0.0))],
                                    motion=MotionModel(np.eye(4), np.zeros((4, 4)), 1.0)), 0)
        z = np.array([generate_frame(truth, k, sensor(), 0.0, 9).measurements[0].z for k in range(10)])
        assert np.all(np.abs(z - 50.0) < 6.0) and z.std() > 0

    def test_bit_identical(self):
        s = spec(self.two, clutter=3.0, pd=0.8)
        a, b = generate_frames(s, 42), generate_frames(s, 42)
        for fa, fb in zip(a, b):
            assert fa.frame == fb.frame
            assert [m.z.tobytes() for m in fa.measurements] == [m.z.tobytes() for m in fb.measurements]
