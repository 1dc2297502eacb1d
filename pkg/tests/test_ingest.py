"""Ingestion tests: feature derivation, normalization, windowing, cache file."""

import math

import numpy as np
import pytest

from gridsift import ingest
from gridsift.ingest import (
    CacheFormatError,
    CacheVersionError,
    FeatureStream,
    NormStats,
    RawStream,
    SchemaError,
    StreamSchema,
    derive_features,
    fit_norm_stats,
    load_window_cache,
    normalize,
    parse_csv,
    save_window_cache,
    split_segments,
    windowize,
)

PERIOD_US = 1_000_000 / 120.0


def make_raw(n, fps=120.0, seed=0):
    rng = np.random.default_rng(seed)
    ts = (np.arange(n, dtype=np.int64) * 1_000_000) // int(fps)
    return RawStream(
        ts=ts,
        v_mag=7200.0 + rng.normal(0, 3.0, (n, 3)),
        v_ang=rng.normal(0, 0.05, (n, 3)),
        i_mag=15.0 + rng.normal(0, 0.05, (n, 3)),
        i_ang=rng.normal(-0.3, 0.05, (n, 3)),
        fps=fps,
    )


def two_pass_stats(row):
    """Independent mean/std oracle: exact two-pass with compensated sums."""
    n = len(row)
    mean = math.fsum(float(v) for v in row) / n
    var = math.fsum((float(v) - mean) ** 2 for v in row) / n
    return mean, math.sqrt(var)


class TestDeriveFeatures:
    def test_power_factor_is_cosine_of_angle_difference(self):
        raw = make_raw(4)
        raw.v_ang[2, 0] = 0.12
        raw.i_ang[2, 0] = -0.09
        fs = derive_features(raw)
        # cos(0.12 - (-0.09)) = cos(0.21), frozen from a high-precision evaluation
        assert fs.x[6, 2] == pytest.approx(0.9780309147241483, abs=1e-15)

    def test_layout_and_passthrough(self):
        raw = make_raw(50)
        fs = derive_features(raw)
        assert fs.x.shape == (9, 50)
        np.testing.assert_array_equal(fs.x[0:3], raw.v_mag.T)
        np.testing.assert_array_equal(fs.x[3:6], raw.i_mag.T)
        assert np.all(np.abs(fs.x[6:9]) <= 1.0)

    def test_pf_range_clamped_by_cosine(self):
        raw = make_raw(10)
        raw.v_ang[:] = 3.0
        raw.i_ang[:] = 0.0
        fs = derive_features(raw)
        assert np.all(fs.x[6:9] >= -1.0) and np.all(fs.x[6:9] <= 1.0)


class TestNormStats:
    def test_matches_two_pass_oracle(self):
        fs = derive_features(make_raw(10_000, seed=3))
        stats = fit_norm_stats(fs.x)
        for f in range(9):
            mean, std = two_pass_stats(fs.x[f])
            assert stats.mean[f] == pytest.approx(mean, rel=1e-12)
            assert stats.std[f] == pytest.approx(std, rel=1e-12)

    def test_constant_channel_floors_std_and_zeroes_values(self):
        x = np.full((9, 100), 5.0)
        stats = fit_norm_stats(x)
        assert np.all(stats.std == ingest.EPS_NORM)
        xn = normalize(x, stats)
        assert np.all(xn == 0.0)

    def test_round_trip_denormalize(self):
        fs = derive_features(make_raw(500, seed=5))
        stats = fit_norm_stats(fs.x)
        back = ingest.denormalize(normalize(fs.x, stats), stats)
        np.testing.assert_allclose(back, fs.x, rtol=1e-12)


class TestSegments:
    def test_small_dropout_keeps_single_segment(self):
        ts = (np.arange(100, dtype=np.int64) * 1_000_000) // 120
        # remove 2 consecutive samples: the gap is 3 periods, not > 3
        ts = np.delete(ts, [50, 51])
        segs = split_segments(ts, 120.0)
        assert segs == [(0, 98)]

    def test_long_dropout_splits(self):
        ts = (np.arange(1000, dtype=np.int64) * 1_000_000) // 120
        ts = np.concatenate([ts[:400], ts[900:]])
        segs = split_segments(ts, 120.0)
        assert segs == [(0, 400), (400, 500)]

    def test_empty(self):
        assert split_segments(np.empty(0, dtype=np.int64), 120.0) == []


class TestWindowize:
    def test_counts_and_boundaries(self):
        fs = derive_features(make_raw(1000))
        ws = windowize(fs, window_len=40, overlap=20)
        # (1000 - 40) // 20 + 1 = 49 windows, trailing partial dropped
        assert ws.n_windows == 49
        assert ws.starts[0] == 0 and ws.starts[1] == 20
        assert ws.starts[-1] == 960
        w0 = ws.window(0, 0)
        np.testing.assert_array_equal(w0, ws.x_norm[0, 0:40])

    def test_windows_do_not_span_gaps(self):
        raw = make_raw(1000)
        raw.ts = np.concatenate([raw.ts[:395], raw.ts[600:]])
        for name in ("v_mag", "v_ang", "i_mag", "i_ang"):
            arr = getattr(raw, name)
            setattr(raw, name, np.concatenate([arr[:395], arr[600:]], axis=0))
        ws = windowize(derive_features(raw))
        # segment ends at index 395: windows starting past 355 would cross it
        for s in ws.starts:
            assert not (s < 395 < s + 40)

    def test_short_segment_yields_no_windows(self):
        fs = derive_features(make_raw(39))
        ws = windowize(fs)
        assert ws.n_windows == 0

    def test_feature_windows_matrix(self):
        fs = derive_features(make_raw(200, seed=9))
        ws = windowize(fs)
        mat = ws.feature_windows(4)
        assert mat.shape == (ws.n_windows, 40)
        np.testing.assert_array_equal(mat[3], ws.window(4, 3))

    def test_invalid_overlap_rejected(self):
        fs = derive_features(make_raw(100))
        with pytest.raises(ValueError):
            windowize(fs, window_len=40, overlap=40)


class TestParseCsv(object):
    def write_csv(self, tmp_path, rows, header=None):
        schema = StreamSchema()
        header = header or ",".join(schema.all_columns())
        path = tmp_path / "stream.csv"
        path.write_text(header + "\n" + "\n".join(rows) + "\n")
        return path

    def row(self, i, ts=None):
        ts = (i * 1_000_000) // 120 if ts is None else ts
        vals = [str(ts)] + [f"{7200.0 + i:.3f}"] * 3 + ["0.01"] * 3 + ["15.5"] * 3 + ["-0.29"] * 3
        return ",".join(vals)

    def test_round_trip(self, tmp_path):
        path = self.write_csv(tmp_path, [self.row(i) for i in range(10)])
        raw = parse_csv(path)
        assert len(raw) == 10
        assert raw.n_skipped == 0
        assert raw.v_mag[3, 0] == pytest.approx(7203.0)
        fs = derive_features(raw)
        assert fs.x[6, 0] == pytest.approx(math.cos(0.30), rel=1e-9)

    def test_malformed_rows_skipped_and_counted(self, tmp_path):
        rows = [self.row(i) for i in range(10)]
        rows[4] = "not,a,number"                       # wrong arity
        rows[7] = rows[7].replace("15.5", "bogus", 1)  # non-numeric field
        path = self.write_csv(tmp_path, rows)
        raw = parse_csv(path)
        assert len(raw) == 8
        assert raw.n_skipped == 2

    def test_non_monotonic_timestamps_dropped(self, tmp_path):
        rows = [self.row(0), self.row(1), self.row(2, ts=100), self.row(3)]
        path = self.write_csv(tmp_path, rows)
        raw = parse_csv(path)
        assert len(raw) == 3
        assert raw.n_skipped == 1
        assert np.all(np.diff(raw.ts) > 0)

    def test_missing_column_raises_schema_error(self, tmp_path):
        schema = StreamSchema()
        cols = [c for c in schema.all_columns() if c != "ib_mag"]
        rows = []
        for i in range(3):
            full = self.row(i).split(",")
            rows.append(",".join(v for c, v in zip(schema.all_columns(), full) if c != "ib_mag"))
        path = self.write_csv(tmp_path, rows, header=",".join(cols))
        with pytest.raises(SchemaError, match="ib_mag"):
            parse_csv(path)

    def test_degree_schema_converts(self, tmp_path):
        path = self.write_csv(tmp_path, [self.row(i) for i in range(4)])
        raw = parse_csv(path, StreamSchema(angle_unit="deg"))
        assert raw.v_ang[0, 0] == pytest.approx(math.radians(0.01))


class TestWindowCache:
    def test_round_trip_preserves_values(self, tmp_path):
        fs = derive_features(make_raw(500, seed=11))
        ws = windowize(fs)
        path = tmp_path / "windows.bin"
        save_window_cache(path, ws)
        back = load_window_cache(path)
        np.testing.assert_array_equal(back.x_norm, ws.x_norm)
        np.testing.assert_array_equal(back.ts, ws.ts)
        assert back.segments == ws.segments
        assert back.n_windows == ws.n_windows
        np.testing.assert_allclose(
            ingest.denormalize(back.x_norm, back.stats), fs.x, rtol=1e-9)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "windows.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(CacheFormatError, match="magic"):
            load_window_cache(path)

    def test_wrong_version(self, tmp_path):
        fs = derive_features(make_raw(100))
        ws = windowize(fs)
        path = tmp_path / "windows.bin"
        save_window_cache(path, ws)
        data = bytearray(path.read_bytes())
        data[8:12] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(data))
        with pytest.raises(CacheVersionError, match="99"):
            load_window_cache(path)

    def test_truncated_payload(self, tmp_path):
        fs = derive_features(make_raw(100))
        ws = windowize(fs)
        path = tmp_path / "windows.bin"
        save_window_cache(path, ws)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(CacheFormatError, match="payload"):
            load_window_cache(path)
