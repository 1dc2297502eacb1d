"""Generator checks: catalog integrity, masks, placement, persistence, IO."""

import numpy as np
import pytest

from gridsift import synth
from gridsift.config import SynthConfig
from gridsift.ingest import derive_features, load_schema, parse_csv
from gridsift.synth import (
    EventLabel,
    archetype_catalog,
    generate_stream,
    generate_super_event,
    load_labels,
    spec_for,
)

CATEGORY_MAP = {
    "I": {3, 4},
    "II": {7, 8, 9},
    "III": {1, 2, 5, 6, 10},
    "IV": {11, 12, 13},
    "V": {14, 15, 16},
}


@pytest.fixture(scope="module")
def ten_min_stream():
    cfg = SynthConfig(duration_min=10.0, events_per_hour=96.0,
                      include_super_event=False)
    return cfg, generate_stream(cfg, seed=7)


class TestCatalog:
    def test_sixteen_archetypes(self):
        cat = archetype_catalog()
        assert len(cat) == 16
        assert [s.archetype for s in cat] == list(range(1, 17))
        assert len({s.name for s in cat}) == 16

    def test_category_partition(self):
        for cat_name, members in CATEGORY_MAP.items():
            for a in members:
                assert spec_for(a).category == cat_name

    def test_pinned_vectors(self):
        assert spec_for(3).vector == (1,) * 9
        assert spec_for(8).vector == (1, 1, 1, 0, 0, 0, 0, 0, 0)
        assert spec_for(10).vector == (0, 0, 0, 1, 1, 1, 1, 1, 1)
        assert spec_for(13).vector == (0, 0, 0, 0, 1, 1, 0, 1, 1)
        assert spec_for(14).vector == (0, 0, 0, 0, 0, 0, 1, 1, 1)

    def test_durations_cover_multiple_windows(self):
        for s in archetype_catalog():
            assert 80 <= s.dur_lo < s.dur_hi

    def test_builder_masks_match_vectors(self):
        rng = np.random.default_rng(3)
        for s in archetype_catalog():
            dur = (s.dur_lo + s.dur_hi) // 2
            dV, dI, dPF, _ = synth._BUILDERS[s.archetype](dur, rng, 120.0)
            mask = tuple(
                int(np.any(block[p]))
                for block in (dV, dI, dPF) for p in range(3)
            )
            assert mask == s.vector, s.name


class TestWaveshapes:
    def test_inrush_pinnacle_is_tight(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            dV, dI, dPF, params = synth._build_inrush(120, rng, 120.0)
            peak = dI[0].max()
            width = int(np.sum(dI[0] > 0.5 * peak))
            assert width < 10

    def test_inrush_amplitude_modes(self):
        rng = np.random.default_rng(5)
        modes = {synth._build_inrush(120, rng, 120.0)[3]["mode"]
                 for _ in range(60)}
        assert modes == {"low", "high"}

    def test_events_revert_to_baseline(self):
        rng = np.random.default_rng(9)
        for s in archetype_catalog():
            dur = s.dur_hi
            dV, dI, dPF, _ = synth._BUILDERS[s.archetype](dur, rng, 120.0)
            for block, scale in ((dV, synth.V_NOM * 0.002),
                                 (dI, synth.I_NOM * 0.02),
                                 (dPF, 0.02)):
                assert np.all(np.abs(block[:, -1]) < scale), s.name


class TestPlacement:
    def test_min_gap_and_order(self, ten_min_stream):
        cfg, (ts, ch, labels) = ten_min_stream
        assert len(labels) == 16
        assert sorted({e.archetype for e in labels}) == list(range(1, 17))
        ordered = sorted(labels, key=lambda e: e.start)
        for a, b in zip(ordered, ordered[1:]):
            assert b.start - a.end >= cfg.min_gap

    def test_labels_half_open_and_in_range(self, ten_min_stream):
        _, (ts, ch, labels) = ten_min_stream
        n = len(ts)
        for e in labels:
            assert 0 <= e.start < e.end <= n

    def test_overfull_stream_raises(self):
        cfg = SynthConfig(duration_min=1.0, events_per_hour=10000.0,
                          include_super_event=False)
        with pytest.raises(ValueError, match="cannot hold"):
            generate_stream(cfg, seed=1)

    def test_event_count_scales_with_rate(self):
        cfg = SynthConfig(duration_min=30.0, events_per_hour=64.0,
                          include_super_event=False)
        _, _, labels = generate_stream(cfg, seed=2)
        assert len(labels) == 32


class TestDeterminism:
    def test_same_seed_same_stream(self, ten_min_stream):
        cfg, (ts, ch, labels) = ten_min_stream
        ts2, ch2, labels2 = generate_stream(cfg, seed=7)
        assert np.array_equal(ts, ts2)
        for k in ch:
            assert np.array_equal(ch[k], ch2[k]), k
        assert labels == labels2

    def test_different_seed_differs(self, ten_min_stream):
        cfg, (ts, ch, labels) = ten_min_stream
        _, ch2, labels2 = generate_stream(cfg, seed=8)
        assert not np.array_equal(ch["ia_mag"], ch2["ia_mag"])


class TestAppliedChannels:
    def test_event_moves_only_masked_features(self):
        # plant one unbalanced B+C event on a quiet baseline and diff
        n = 4000
        rng = np.random.default_rng(21)
        ch = synth._baseline(n, 120.0, rng)
        before = {k: v.copy() for k, v in ch.items()}
        spec = spec_for(13)
        dV, dI, dPF, _ = synth._BUILDERS[13](200, rng, 120.0)
        synth._apply_event(ch, 1000, dV, dI, dPF)
        moved = {k for k in ch if not np.array_equal(ch[k], before[k])}
        assert moved == {"ib_mag", "ic_mag", "ib_ang", "ic_ang"}

    def test_pf_delta_lands_on_derived_feature(self):
        n = 4000
        rng = np.random.default_rng(22)
        ch = synth._baseline(n, 120.0, rng)
        pf_before = np.cos(ch["vb_ang"] - ch["ib_ang"]).copy()
        dV, dI, dPF, _ = synth._BUILDERS[16](300, rng, 120.0)
        synth._apply_event(ch, 1000, dV, dI, dPF)
        pf_after = np.cos(ch["vb_ang"] - ch["ib_ang"])
        sl = slice(1000, 1300)
        outside = np.r_[0:1000, 1300:n]
        assert np.allclose(pf_after[outside], pf_before[outside])
        assert np.max(np.abs(pf_after[sl] - pf_before[sl] - dPF[1])) < 1e-9


class TestSuperEvent:
    def test_burst_geometry(self):
        n = 40000
        rng = np.random.default_rng(31)
        ch = synth._baseline(n, 120.0, rng)
        labels = generate_super_event(ch, 2000, rng, 120.0)
        assert len(labels) == synth.SUPER_FOLLOWERS + 1
        trig, followers = labels[0], labels[1:]
        assert trig.archetype == synth.SUPER_TRIGGER
        assert all(f.archetype == synth.SUPER_FOLLOWER for f in followers)
        assert all(f.super_id == 0 for f in labels)
        gap = followers[0].start - trig.end
        assert abs(gap - round(synth.SUPER_GAP_S * 120.0)) <= 1
        burst = followers[-1].end - followers[0].start
        assert burst <= 60.0 * 120.0
        grows = [f.params["grow"] for f in followers]
        assert grows == sorted(grows) and grows[-1] > grows[0]

    def test_trigger_only_when_count_zero(self):
        n = 10000
        rng = np.random.default_rng(32)
        ch = synth._baseline(n, 120.0, rng)
        labels = generate_super_event(ch, 2000, rng, 120.0, count=0)
        assert len(labels) == 1
        assert labels[0].archetype == synth.SUPER_TRIGGER

    def test_stream_includes_super_members(self):
        cfg = SynthConfig(duration_min=20.0, events_per_hour=12.0,
                          include_super_event=True)
        _, _, labels = generate_stream(cfg, seed=13)
        members = [e for e in labels if e.super_id == 0]
        rest = [e for e in labels if e.super_id is None]
        assert len(members) == synth.SUPER_FOLLOWERS + 1
        assert len(rest) == 4
        ordered = sorted(labels, key=lambda e: e.start)
        for a, b in zip(ordered, ordered[1:]):
            assert b.start >= a.end


class TestCorpusIO:
    def test_round_trip_through_ingest(self, tmp_path):
        cfg = SynthConfig(duration_min=3.0, events_per_hour=120.0,
                          include_super_event=False)
        csv_path, schema_path, labels_path = synth.write_corpus(
            tmp_path, cfg, seed=17)
        schema = load_schema(schema_path)
        raw = parse_csv(csv_path, schema)
        feats = derive_features(raw)
        ts, ch, labels = generate_stream(cfg, seed=17)
        assert np.array_equal(raw.ts, ts)
        assert feats.x.shape == (9, len(ts))
        assert np.max(np.abs(feats.x[0] - ch["va_mag"])) < 1e-5
        pf_b = np.cos(ch["vb_ang"] - ch["ib_ang"])
        assert np.max(np.abs(feats.x[7] - pf_b)) < 1e-5
        assert load_labels(labels_path) == labels

    def test_labels_format_guard(self, tmp_path):
        path = tmp_path / "labels.json"
        path.write_text('{"format": "other", "version": 1, "events": []}')
        with pytest.raises(ValueError, match="format"):
            load_labels(path)
        path.write_text(
            '{"format": "gridsift-labels", "version": 99, "events": []}')
        with pytest.raises(ValueError, match="version"):
            load_labels(path)

    def test_label_fields_round_trip(self, tmp_path):
        cfg = SynthConfig(duration_min=3.0, events_per_hour=40.0,
                          include_super_event=False)
        _, _, labels_path = synth.write_corpus(tmp_path, cfg, seed=19)
        loaded = load_labels(labels_path)
        assert all(isinstance(e, EventLabel) for e in loaded)
        assert all(e.params for e in loaded)
