import numpy as np
import pytest

from ecgnet.errors import BadContainer, EmptyWindow, MissingRecord, PipelineOrderError
from ecgnet.record_io import Annotation, SignalRecord
from ecgnet.segmentation import (
    AAMI_SYMBOLS,
    DS1,
    DST1,
    PACED_RECORDS,
    AamiClass,
    RecordStore,
    SegmentSet,
    balanced_sample,
    build_dataset,
    build_segments,
    label_segment,
    map_to_aami,
    read_segments,
    split_records,
    svdb_split,
    write_segments,
)

N, S, V, F, Q = AamiClass


def _record(n, rid="r1", seed=0):
    x = np.random.default_rng(seed).standard_normal(n)
    return SignalRecord(rid, "MLII", 180.0, x, preprocessed=True)


def _enumerate(n, beats, length=1800):
    """Brute force: (start, label) for every beat whose window fits."""
    out = []
    for i, _ in beats:
        if i + length <= n:
            inside = [c for j, c in beats if i <= j < i + length]
            out.append((i, label_segment(inside)))
    return out


class TestAami:
    @pytest.mark.parametrize("sym,cls", [("L", N), ("N", N), ("j", N), ("A", S), ("S", S),
                                         ("V", V), ("E", V), ("F", F), ("/", Q), ("f", Q)])
    def test_mapping(self, sym, cls):
        assert map_to_aami(sym) == cls

    @pytest.mark.parametrize("sym", ["+", "~", "|", "x", "!", "[", ""])
    def test_non_beat(self, sym):
        assert map_to_aami(sym) is None

    def test_preimages_disjoint(self):
        seen = [s for syms in AAMI_SYMBOLS.values() for s in syms]
        assert len(seen) == len(set(seen)) == 15
        assert [int(c) for c in AamiClass] == [0, 1, 2, 3, 4]


class TestLabel:
    def test_all_normal(self):
        assert label_segment([N] * 5) == N

    def test_normal_excluded(self):
        assert label_segment([N, N, N, V]) == V

    def test_tie_goes_to_severity(self):
        assert label_segment([S, S, V, V]) == V
        assert label_segment([S, F]) == S
        assert label_segment([Q, F]) == F

    def test_modal_abnormal(self):
        assert label_segment([N, S, S, V]) == S

    def test_count_vector(self):
        assert label_segment(np.array([9, 0, 0, 2, 1])) == F

    def test_empty(self):
        with pytest.raises(EmptyWindow):
            label_segment([])


class TestBuildSegments:
    def test_too_short(self):
        out = build_segments(_record(1799), [Annotation(0, "N")], 180.0)
        assert len(out) == 0 and out.segment_length == 1800

    def test_exact_fit(self):
        out = build_segments(_record(1800), [Annotation(0, "N")], 180.0)
        assert len(out) == 1 and out.samples.shape == (1, 1800)

    def test_twelve_beats_in_thirty_seconds(self):
        # beats every 2.5 s, given at 360 Hz, record already at 180 Hz
        rec = _record(30 * 180)
        syms = "NNVNNANNNFNN"
        anns = [Annotation(k * 900, s) for k, s in enumerate(syms)]
        out = build_segments(rec, anns, 360.0)
        beats = [(k * 450, map_to_aami(s)) for k, s in enumerate(syms)]
        expect = _enumerate(len(rec), beats)
        assert len(expect) == 9
        assert list(out.start_index) == [i for i, _ in expect]
        assert [AamiClass(c) for c in out.labels] == [c for _, c in expect]
        for seg_i, start in enumerate(out.start_index):
            np.testing.assert_array_equal(out.samples[seg_i], rec.samples[start : start + 1800].astype(np.float32))

    def test_non_beats_ignored(self):
        anns = [Annotation(0, "+"), Annotation(10, "N"), Annotation(20, "~"), Annotation(30, "V")]
        out = build_segments(_record(2000), anns, 180.0)
        assert list(out.start_index) == [10, 30]
        assert list(out.labels) == [V, V]

    def test_rescale_rounds_half_up(self):
        # 128 Hz index 64 -> 90.0; index 3 -> 4.21875 -> 4; index 1 -> 1.40625 -> 1
        out = build_segments(_record(2000), [Annotation(1, "N"), Annotation(3, "N"), Annotation(64, "N")], 128.0)
        assert list(out.start_index) == [1, 4, 90]

    def test_requires_preprocessed(self):
        rec = SignalRecord("x", "MLII", 360.0, np.zeros(4000))
        with pytest.raises(PipelineOrderError):
            build_segments(rec, [Annotation(0, "N")], 360.0)

    def test_one_hot(self):
        out = build_segments(_record(1900), [Annotation(0, "N"), Annotation(50, "A")], 180.0)
        np.testing.assert_array_equal(out[0].one_hot, [0, 1, 0, 0, 0])
        assert out.one_hot.sum(axis=1).tolist() == [1.0, 1.0]


class TestSplits:
    def test_lists(self):
        assert len(DS1) == len(DST1) == 22
        assert set(DS1).isdisjoint(DST1)
        assert set(PACED_RECORDS).isdisjoint(set(DS1) | set(DST1))

    def test_svdb_even_odd(self):
        train, test = svdb_split(["803", "800", "802", "801", "804"])
        assert train == ("800", "802", "804")
        assert test == ("801", "803")

    def test_overrides(self):
        assert split_records("DS1", overrides={"DS1": [1, 2]}) == ("1", "2")

    def test_unknown(self):
        with pytest.raises(MissingRecord):
            split_records("DS9")


def _toy_stores():
    # record a: 2400 samples, beats at 0 N, 300 V, 700 N, 1000 N -> windows at 0, 300
    # record b: 2000 samples, beats at 100 A, 150 N, 250 Q -> windows at 100, 150
    a = RecordStore(_record(2400, "a", 1), [Annotation(i, s) for i, s in
                                            [(0, "N"), (300, "V"), (700, "N"), (1000, "N")]], 180.0)
    b = RecordStore(_record(2000, "b", 2), [Annotation(i, s) for i, s in
                                            [(100, "A"), (150, "N"), (250, "Q")]], 180.0)
    return {"a": a, "b": b}


class TestDataset:
    def test_toy_counts(self):
        ds = build_dataset("DS1", _toy_stores(), record_ids=["a", "b"], standardize=False)
        # a@0 {N,V,N,N} -> V; a@300 {V,N,N} -> V; b@100 {A,N,Q} tie -> SVEB; b@150 {N,Q} -> Q
        assert ds.segments.keys() == ["a:0", "a:300", "b:100", "b:150"]
        assert list(ds.segments.labels) == [V, V, S, Q]
        assert ds.class_counts.tolist() == [0, 1, 2, 0, 1]
        assert ds.segments.role == "train"

    def test_test_split_role_and_standardized(self):
        ds = build_dataset("DST1", _toy_stores(), record_ids=["a", "b"])
        assert ds.segments.role == "test"
        assert abs(float(ds.segments.samples.astype(np.float64).mean())) < 1e-6
        assert ds.std > 0

    def test_missing_record(self):
        with pytest.raises(MissingRecord):
            build_dataset("DS1", _toy_stores(), record_ids=["a", "zz"])

    def test_record_order_independent(self):
        stores = _toy_stores()
        one = build_dataset("DS1", stores, record_ids=["a", "b"]).segments
        two = build_dataset("DS1", stores, record_ids=["b", "a"]).segments
        assert sorted(one.keys()) == sorted(two.keys())
        order = np.argsort(two.keys())
        np.testing.assert_allclose(two.samples[order], one.samples[np.argsort(one.keys())], atol=1e-6)


def _pool(counts, length=4, seed=0):
    labels = np.repeat(np.arange(5), counts)
    n = labels.shape[0]
    x = np.random.default_rng(seed).standard_normal((n, length)).astype(np.float32)
    return SegmentSet(x, labels, [f"r{i % 3}" for i in range(n)], np.arange(n) * 10)


class TestBalancedSample:
    def test_zero_targets(self):
        assert len(balanced_sample(_pool([5, 5, 5, 5, 5]), [0] * 5, seed=1)) == 0

    def test_supply_exhausted(self):
        pool = _pool([30, 20, 25, 3, 6])
        out = balanced_sample(pool, [10, 10, 10, 8, 2], seed=3)
        assert out.class_counts().tolist() == [10, 10, 10, 3, 2]
        keys = out.keys()
        assert len(keys) == len(set(keys))
        # every F segment of the pool is present exactly once
        f_pool = {k for k, c in zip(pool.keys(), pool.labels) if c == F}
        f_out = [k for k, c in zip(keys, out.labels) if c == F]
        assert sorted(f_out) == sorted(f_pool)
        # sampled rows are the original rows
        lookup = dict(zip(pool.keys(), pool.samples))
        for k, row in zip(keys, out.samples):
            np.testing.assert_array_equal(row, lookup[k])

    def test_reproducible(self):
        pool = [_pool([30, 20, 25, 3, 6], seed=0), _pool([10, 10, 10, 10, 10], seed=1)]
        a = balanced_sample(pool, [12, 12, 12, 5, 5], seed=9)
        b = balanced_sample(pool, [12, 12, 12, 5, 5], seed=9)
        c = balanced_sample(pool, [12, 12, 12, 5, 5], seed=10)
        assert a.keys() == b.keys()
        assert a.keys() != c.keys()

    def test_shuffled(self):
        out = balanced_sample(_pool([50, 50, 50, 50, 50]), [20] * 5, seed=0)
        assert list(out.labels) != sorted(out.labels)


class TestStore:
    def test_round_trip(self, tmp_path):
        segs = _pool([2, 1, 0, 1, 3], length=1800).replace(split="DST2", role="test")
        path = tmp_path / "x.ecgseg"
        write_segments(path, segs)
        back = read_segments(path)
        np.testing.assert_array_equal(back.samples, segs.samples)
        assert back.labels.tolist() == segs.labels.tolist()
        assert back.keys() == segs.keys()
        assert (back.split, back.role) == ("DST2", "test")
        assert path.read_bytes()[:8] == b"ECGSEG1\0"

    def test_empty_round_trip(self, tmp_path):
        path = tmp_path / "e.ecgseg"
        write_segments(path, SegmentSet.empty(1800))
        back = read_segments(path)
        assert len(back) == 0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ecgseg"
        path.write_bytes(b"garbage!" * 4)
        with pytest.raises(BadContainer):
            read_segments(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "x.ecgseg"
        write_segments(path, _pool([1, 1, 1, 1, 1]))
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(BadContainer):
            read_segments(path)
