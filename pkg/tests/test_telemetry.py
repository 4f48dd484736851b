import numpy as np
import pytest

from vrcomfort import quat
from vrcomfort.errors import InsufficientDataError
from vrcomfort.telemetry import (
    FrameTiming,
    HeadSample,
    TelemetryStream,
    TelemetryWindow,
    iter_windows,
    read_frames_csv,
    read_head_csv,
    resample,
    window_from_samples,
    write_frames_csv,
    write_head_csv,
)

IDENT = np.array([1.0, 0.0, 0.0, 0.0])


def sample(t, pos=(0.0, 0.0, 0.0), q=IDENT):
    return HeadSample(t, np.array(pos, dtype=float), np.array(q, dtype=float))


def uniform_samples(n, rate=72.0, pos_fn=None, quat_fn=None):
    out = []
    for k in range(n):
        t = k / rate
        pos = pos_fn(t) if pos_fn else (0.0, 0.0, 0.0)
        q = quat_fn(t) if quat_fn else IDENT
        out.append(sample(t, pos, q))
    return out


class TestPushHead:
    def test_monotone_accepted(self):
        s = TelemetryStream()
        assert s.push_head(sample(0.5)) is None
        assert s.push_head(sample(1.0)) is None

    def test_non_monotone_rejected_with_reason(self):
        s = TelemetryStream()
        assert s.push_head(sample(1.0)) is None
        reason = s.push_head(sample(0.5))
        assert reason is not None and "monotonic" in reason

    def test_quat_renormalized(self):
        s = TelemetryStream()
        assert s.push_head(sample(0.0, q=(2.0, 0.0, 0.0, 0.0))) is None
        for _ in range(3):
            s.push_head(sample(s.last_t() + 0.1))
        w = s.window(0.3)
        assert np.allclose(w.quat[0], IDENT)

    def test_non_finite_rejected(self):
        s = TelemetryStream()
        assert s.push_head(sample(0.0, pos=(np.nan, 0, 0))) is not None
        assert s.push_head(sample(0.0, q=(np.inf, 0, 0, 0))) is not None

    def test_zero_quat_rejected(self):
        s = TelemetryStream()
        assert "zero" in s.push_head(sample(0.0, q=(0.0, 0.0, 0.0, 0.0)))

    def test_sign_aligned_with_predecessor(self):
        s = TelemetryStream()
        q = quat.from_axis_angle([0, 0, 1], 0.3)
        s.push_head(sample(0.0, q=q))
        s.push_head(sample(0.1, q=-q))  # same rotation, flipped cover
        for k in range(2, 5):
            s.push_head(sample(0.1 * k, q=q))
        w = s.window(0.4)
        dots = np.einsum("ij,ij->i", w.quat[:-1], w.quat[1:])
        assert np.all(dots >= 0.0)


class TestEviction:
    def test_old_samples_evicted(self):
        s = TelemetryStream(capacity_s=10.0)
        for k in range(1600):  # 16 s at 100 Hz
            s.push_head(sample(k / 100.0))
        w = s.window(9.0)
        assert w.t[0] >= 15.99 - 10.0 - 1e-9
        assert len(s) <= 10.0 * 100 + 2

    def test_frames_evicted_too(self):
        s = TelemetryStream(capacity_s=2.0)
        for k in range(500):
            s.push_frame(FrameTiming(k / 100.0, 10.0))
        assert s.frame_count <= 2.0 * 100 + 2


class TestWindow:
    def test_216_samples_all_returned(self):
        s = TelemetryStream()
        for hs in uniform_samples(216):
            s.push_head(hs)
        assert len(s.window(3.0)) == 216

    def test_two_samples_insufficient(self):
        s = TelemetryStream()
        s.push_head(sample(0.0))
        s.push_head(sample(0.1))
        with pytest.raises(InsufficientDataError):
            s.window(3.0)

    def test_720_samples_returns_last_window(self):
        s = TelemetryStream()
        for hs in uniform_samples(720):
            s.push_head(hs)
        w = s.window(3.0)
        assert 216 <= len(w) <= 218
        assert w.span <= 3.0 + 1e-9

    def test_window_does_not_mutate_stream(self):
        s = TelemetryStream()
        for hs in uniform_samples(300):
            s.push_head(hs)
        n = len(s)
        s.window(3.0)
        assert len(s) == n

    def test_window_arrays_immutable(self):
        w = window_from_samples(uniform_samples(10))
        with pytest.raises(ValueError):
            w.t[0] = 99.0

    def test_short_span_insufficient(self):
        s = TelemetryStream()
        for hs in uniform_samples(72):  # ~1 s
            s.push_head(hs)
        with pytest.raises(InsufficientDataError):
            s.window(3.0)


class TestWindowValidation:
    def test_too_few(self):
        with pytest.raises(ValueError):
            TelemetryWindow(np.array([0.0]), np.zeros((1, 3)), np.array([IDENT]))

    def test_non_monotone(self):
        with pytest.raises(ValueError):
            TelemetryWindow(np.array([0.0, 0.0]), np.zeros((2, 3)), np.tile(IDENT, (2, 1)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            TelemetryWindow(np.array([0.0, 1.0]), np.zeros((2, 2)), np.tile(IDENT, (2, 1)))

    def test_non_finite(self):
        pos = np.zeros((2, 3))
        pos[0, 0] = np.nan
        with pytest.raises(ValueError):
            TelemetryWindow(np.array([0.0, 1.0]), pos, np.tile(IDENT, (2, 1)))


class TestResample:
    def test_identity_on_uniform_window(self):
        w = window_from_samples(
            uniform_samples(216, pos_fn=lambda t: (np.sin(t), t, 0.0),
                            quat_fn=lambda t: quat.from_axis_angle([0, 0, 1], 0.5 * t))
        )
        r = resample(w, 72.0)
        assert len(r) == len(w)
        assert np.allclose(r.t, w.t, atol=1e-9)
        assert np.allclose(r.pos, w.pos, atol=1e-9)
        assert np.allclose(r.quat, w.quat, atol=1e-9)

    def test_idempotent(self):
        w = window_from_samples(uniform_samples(216, pos_fn=lambda t: (t * t, 0.0, 0.0)))
        once = resample(w, 60.0)
        twice = resample(once, 60.0)
        assert np.allclose(once.t, twice.t, atol=1e-9)
        assert np.allclose(once.pos, twice.pos, atol=1e-9)
        assert np.allclose(once.quat, twice.quat, atol=1e-9)

    def test_linear_midpoint(self):
        w = window_from_samples([sample(0.0), sample(1.0, pos=(1.0, 0.0, 0.0))])
        r = resample(w, 4.0)
        k = int(np.argmin(np.abs(r.t - 0.5)))
        assert np.allclose(r.pos[k], [0.5, 0.0, 0.0], atol=1e-12)

    def test_slerp_midpoint_45_degrees(self):
        w = window_from_samples(
            [sample(0.0), sample(1.0, q=quat.from_axis_angle([0, 0, 1], np.pi / 2))]
        )
        r = resample(w, 2.0)
        k = int(np.argmin(np.abs(r.t - 0.5)))
        expected = quat.from_axis_angle([0, 0, 1], np.pi / 4)
        assert np.allclose(r.quat[k], expected, atol=1e-6)

    def test_unit_norm_output(self):
        rng = np.random.default_rng(9)
        qs = quat.normalize(rng.normal(size=(20, 4)))
        samples = [sample(k * 0.1 + rng.uniform(0, 0.02), q=qs[k]) for k in range(20)]
        r = resample(window_from_samples(samples), 50.0)
        assert np.allclose(np.linalg.norm(r.quat, axis=1), 1.0, atol=1e-9)

    def test_bad_rate(self):
        w = window_from_samples(uniform_samples(8))
        with pytest.raises(ValueError):
            resample(w, 0.0)


class TestCurrentFps:
    def _stream_with_frames(self, dts_ms):
        s = TelemetryStream()
        t = 0.0
        for dt in dts_ms:
            t += dt / 1000.0
            s.push_frame(FrameTiming(t, dt))
        return s

    def test_72hz_frames(self):
        s = self._stream_with_frames([1000.0 / 72.0] * 72)
        assert abs(s.current_fps(1.0) - 72.0) <= 0.5

    def test_50hz_frames(self):
        s = self._stream_with_frames([20.0] * 50)
        assert abs(s.current_fps(1.0) - 50.0) <= 0.5

    def test_mixed_frames(self):
        s = self._stream_with_frames([10.0] * 60 + [20.0] * 30)
        assert abs(s.current_fps(1.2) - 75.0) <= 1.0

    def test_no_frames(self):
        s = TelemetryStream()
        with pytest.raises(InsufficientDataError):
            s.current_fps(1.0)

    def test_frame_fps_property(self):
        assert FrameTiming(0.0, 20.0).fps == 50.0


class TestCsv:
    def test_head_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        captures = {
            "P01": [sample(k / 72.0, rng.normal(size=3),
                           quat.normalize(rng.normal(size=4))) for k in range(20)],
            "P02": [sample(k / 60.0, rng.normal(size=3)) for k in range(10)],
        }
        path = tmp_path / "head.csv"
        write_head_csv(path, captures)
        back = read_head_csv(path)
        assert set(back) == {"P01", "P02"}
        for pid in captures:
            for a, b in zip(captures[pid], back[pid]):
                assert a.t == b.t
                assert np.array_equal(a.pos, b.pos)
                assert np.array_equal(a.quat, b.quat)

    def test_head_rewrite_byte_identical(self, tmp_path):
        captures = {"P": [sample(k * 0.251, (k * 0.1, -k, 0.0)) for k in range(9)]}
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_head_csv(p1, captures)
        write_head_csv(p2, read_head_csv(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_frames_round_trip(self, tmp_path):
        frames = {"P": [FrameTiming(k * 0.0139, 13.9) for k in range(1, 30)]}
        path = tmp_path / "frames.csv"
        write_frames_csv(path, frames)
        back = read_frames_csv(path)
        assert back["P"] == frames["P"]

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("participant_id,t\nP,0.0\n")
        with pytest.raises(ValueError, match="missing"):
            read_head_csv(path)


class TestIterWindows:
    def test_sixty_second_capture_yields_58(self):
        samples = uniform_samples(int(60 * 72))
        wins = list(iter_windows(samples, 3.0, 1.0))
        assert len(wins) == 58

    def test_each_window_valid(self):
        samples = uniform_samples(int(12 * 72))
        for w in iter_windows(samples, 3.0, 1.0):
            assert len(w) >= 4
            assert w.span >= 0.9 * 3.0

    def test_short_capture_yields_none(self):
        assert list(iter_windows(uniform_samples(int(2 * 72)), 3.0, 1.0)) == []

    def test_empty_input(self):
        assert list(iter_windows([], 3.0, 1.0)) == []
