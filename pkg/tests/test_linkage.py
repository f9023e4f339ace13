import math

import numpy as np
import pytest

from streetscan import (
    GeoPoint,
    GpsSample,
    GpsTrack,
    MatchRecord,
    ParcelRecord,
    PlanePoint,
    VideoMeta,
    build_frame_manifest,
    build_parcel_index,
    dedupe_matches,
    frame_output_name,
    frame_timestamp,
    match_samples,
    match_track,
    project_conus_albers,
    unproject_conus_albers,
)
from streetscan.errors import (
    EmptyInputError,
    InputError,
    InvalidFrameIndexError,
    MissingVideoMetadataError,
)
from streetscan.linkage import DropReason

# all plane-coordinate fixtures live near the projection origin
ORIGIN = PlanePoint(0.0, 0.0)


def geo_at(x: float, y: float) -> GeoPoint:
    return unproject_conus_albers(PlanePoint(x, y))


def parcel_at(object_id: int, x: float, y: float) -> ParcelRecord:
    return ParcelRecord(object_id, f"src-{object_id}", geo_at(x, y))


def track_through(points_xy, video_id="vid", fps=30.0, total=None) -> GpsTrack:
    samples = tuple(
        GpsSample(i, geo_at(x, y)) for i, (x, y) in enumerate(points_xy)
    )
    return GpsTrack(video_id, samples, fps, total if total is not None else len(samples))


class TestSpatialIndex:
    def test_inside_buffer(self):
        index = build_parcel_index([parcel_at(1, 0, 0)], buffer_m=25)
        cands = index.candidates(PlanePoint(0, 24.9))
        assert [p.object_id for p, _ in cands] == [1]

    def test_outside_buffer(self):
        index = build_parcel_index([parcel_at(1, 0, 0)], buffer_m=25)
        assert index.candidates(PlanePoint(0, 25.1)) == []

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            build_parcel_index([], buffer_m=25)

    def test_500_random_parcels_match_brute_force(self):
        rng = np.random.default_rng(5)
        coords = rng.uniform(-400, 400, size=(500, 2))
        parcels = [parcel_at(i + 1, x, y) for i, (x, y) in enumerate(coords)]
        index = build_parcel_index(parcels, buffer_m=25)
        # recompute projected positions the same way the index does
        proj = np.array(
            [(project_conus_albers(p.centroid).x, project_conus_albers(p.centroid).y) for p in parcels]
        )
        for _ in range(200):
            q = rng.uniform(-420, 420, size=2)
            got = {p.object_id for p, _ in index.candidates(PlanePoint(*q))}
            dists = np.hypot(proj[:, 0] - q[0], proj[:, 1] - q[1])
            expected = {i + 1 for i in np.flatnonzero(dists <= 25.0)}
            assert got == expected


def brute_force_match(track, parcels, buffer_m=25.0):
    """All-pairs oracle: nearest in-buffer parcel per sample, lower id ties."""
    proj = {
        p.object_id: project_conus_albers(p.centroid) for p in parcels
    }
    matched, dropped = [], []
    for s in track.samples:
        sp = project_conus_albers(s.position)
        best = None
        for p in sorted(parcels, key=lambda p: p.object_id):
            pp = proj[p.object_id]
            d = math.hypot(pp.x - sp.x, pp.y - sp.y)
            if d <= buffer_m and (best is None or d < best[1]):
                best = (p.object_id, d)
        if best is None:
            dropped.append(s.row_index)
        else:
            matched.append((s.row_index, best[0], best[1]))
    return matched, dropped


class TestMatching:
    def test_nearest_wins(self):
        parcels = [parcel_at(1, 0, 20), parcel_at(2, 0, 10)]
        index = build_parcel_index(parcels)
        track = track_through([(0, 0)])
        matches, drops = match_track(track, index)
        assert not drops
        assert [m.object_id for m in matches] == [2]
        assert matches[0].distance_m == pytest.approx(10.0, abs=1e-6)

    def test_no_candidates_drop(self):
        index = build_parcel_index([parcel_at(1, 0, 0)])
        track = track_through([(500, 500)])
        matches, drops = match_track(track, index)
        assert matches == []
        assert [d.reason for d in drops] == [DropReason.NO_CANDIDATE]

    def test_distance_tie_goes_to_lower_object_id(self):
        parcels = [parcel_at(2, 0, 10), parcel_at(1, 0, -10)]
        index = build_parcel_index(parcels)
        matches, _ = match_track(track_through([(0, 0)]), index)
        assert matches[0].object_id == 1

    def test_drive_past_three_parcels_dedupes_to_closest_approach(self):
        # street along y=0; parcels 10 m north, 100 m apart
        parcels = [parcel_at(i + 1, 100.0 * i, 10.0) for i in range(3)]
        index = build_parcel_index(parcels)
        xs = np.arange(-30.0, 240.0, 5.0)
        track = track_through([(x, 0.0) for x in xs])
        matches, _ = match_track(track, index)
        assert sorted(m.object_id for m in matches) == [1, 2, 3]
        # oracle: closest approach is the sample right at each parcel's x
        per_sample, _ = brute_force_match(track, parcels)
        for m in matches:
            oracle_best = min(
                (d, row) for row, oid, d in per_sample if oid == m.object_id
            )
            assert m.distance_m == pytest.approx(oracle_best[0], abs=1e-9)
            assert m.frame_number == oracle_best[1]

    def test_per_sample_counts_before_dedup(self):
        parcels = [parcel_at(1, 0, 10), parcel_at(2, 300, 10)]
        index = build_parcel_index(parcels)
        xs = list(np.arange(-50.0, 350.0, 10.0))
        track = track_through([(x, 0.0) for x in xs])
        matches, drops = match_samples(track, index)
        assert len(matches) + len(drops) == len(track.samples)
        no_cand = [d for d in drops if d.reason is DropReason.NO_CANDIDATE]
        assert len(no_cand) == len(drops)

    def test_matches_within_buffer_distance(self):
        rng = np.random.default_rng(9)
        parcels = [
            parcel_at(i + 1, x, y) for i, (x, y) in enumerate(rng.uniform(-300, 300, (50, 2)))
        ]
        index = build_parcel_index(parcels)
        track = track_through([(x, 0.0) for x in np.arange(-300.0, 300.0, 7.0)])
        matches, _ = match_samples(track, index)
        assert matches
        assert all(m.distance_m <= 25.0 for m in matches)

    def test_index_equals_brute_force_on_random_instance(self):
        rng = np.random.default_rng(31)
        parcels = [
            parcel_at(i + 1, x, y)
            for i, (x, y) in enumerate(rng.uniform(-500, 500, (200, 2)))
        ]
        index = build_parcel_index(parcels)
        pts = [(x, rng.uniform(-40, 40)) for x in rng.uniform(-520, 520, 300)]
        track = track_through(pts)
        got_m, got_d = match_samples(track, index)
        exp_m, exp_d = brute_force_match(track, parcels)
        assert [(m.frame_number, m.object_id) for m in got_m] == [
            (row, oid) for row, oid, _ in exp_m
        ]
        assert [d.frame_number for d in got_d] == exp_d
        for got, (_, _, dist) in zip(got_m, exp_m):
            assert got.distance_m == pytest.approx(dist, abs=1e-9)


class TestFrameTimestamp:
    def test_zero(self):
        assert frame_timestamp(0, 30.0, 100) == 0.0

    def test_exact_division(self):
        assert frame_timestamp(450, 30.0, 900) == 15.0

    def test_out_of_range(self):
        with pytest.raises(InvalidFrameIndexError):
            frame_timestamp(1000, 30.0, 900)
        with pytest.raises(InvalidFrameIndexError):
            frame_timestamp(-1, 30.0, 900)
        with pytest.raises(InputError):
            frame_timestamp(1, 0.0, 900)


class TestManifest:
    def match(self, oid, vid, frame):
        return MatchRecord(oid, vid, frame, GeoPoint(35.6, -82.4), 10.0)

    def test_naming_and_timestamp(self):
        meta = {"V": VideoMeta("V", 30.0, 900)}
        rows, drops, names = build_frame_manifest([self.match(7, "V", 450)], meta)
        assert not drops
        assert rows == [type(rows[0])("V", 15.0, "7.jpg")]
        assert names[(7, "V", 450)] == "7.jpg"

    def test_empty(self):
        assert build_frame_manifest([], {}) == ([], [], {})

    def test_grouped_by_video_then_time(self):
        meta = {v: VideoMeta(v, 30.0, 900) for v in ("a", "b")}
        matches = [
            self.match(1, "b", 60),
            self.match(2, "a", 120),
            self.match(3, "a", 30),
        ]
        rows, _, _ = build_frame_manifest(matches, meta)
        assert [(r.video_id, r.timestamp_s) for r in rows] == [
            ("a", 1.0),
            ("a", 4.0),
            ("b", 2.0),
        ]

    def test_invalid_frame_becomes_drop(self):
        meta = {"V": VideoMeta("V", 30.0, 100)}
        rows, drops, _ = build_frame_manifest([self.match(1, "V", 100)], meta)
        assert rows == []
        assert [d.reason for d in drops] == [DropReason.INVALID_FRAME_INDEX]

    def test_missing_metadata_raises(self):
        with pytest.raises(MissingVideoMetadataError):
            build_frame_manifest([self.match(1, "V", 0)], {})

    def test_repeat_object_gets_ordinal_suffix(self):
        meta = {v: VideoMeta(v, 30.0, 900) for v in ("a", "b")}
        rows, _, names = build_frame_manifest(
            [self.match(7, "a", 10), self.match(7, "b", 20)], meta
        )
        assert names[(7, "a", 10)] == "7.jpg"
        assert names[(7, "b", 20)] == "7_1.jpg"
        assert frame_output_name(7, 2) == "7_2.jpg"

    def test_timestamps_within_duration(self):
        meta = {"V": VideoMeta("V", 30.0, 900)}
        matches = [self.match(i + 1, "V", i * 100) for i in range(9)]
        rows, _, _ = build_frame_manifest(matches, meta)
        assert all(0.0 <= r.timestamp_s < 30.0 for r in rows)


class TestDedupe:
    def test_keeps_min_distance_then_min_frame(self):
        mk = lambda f, d: MatchRecord(1, "v", f, GeoPoint(35.6, -82.4), d)
        assert dedupe_matches([mk(5, 10.0), mk(3, 8.0), mk(9, 8.0)])[0].frame_number == 3

    def test_per_video_dedup(self):
        mk = lambda v, f: MatchRecord(1, v, f, GeoPoint(35.6, -82.4), 5.0)
        out = dedupe_matches([mk("a", 1), mk("a", 2), mk("b", 3)])
        assert [(m.video_id, m.frame_number) for m in out] == [("a", 1), ("b", 3)]


class TestTrackValidation:
    def test_rows_must_increase(self):
        with pytest.raises(InputError):
            GpsTrack(
                "v",
                (GpsSample(0, GeoPoint(35.6, -82.4)), GpsSample(0, GeoPoint(35.6, -82.4))),
                30.0,
                2,
            )

    def test_requires_samples_and_fps(self):
        with pytest.raises(EmptyInputError):
            GpsTrack("v", (), 30.0, 0)
        with pytest.raises(InputError):
            GpsTrack("v", (GpsSample(0, GeoPoint(35.6, -82.4)),), 0.0, 1)
