"""Match GPS track samples to buffered parcels and build the frame manifest.

Matching runs entirely in the projected plane: parcels are indexed once,
each GPS sample retrieves candidate parcels whose buffer contains it, and
the nearest candidate wins. One match per (parcel, video) survives
deduplication: the closest-approach sample, ties broken by the earlier
frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyInputError,
    InputError,
    InvalidFrameIndexError,
    MissingVideoMetadataError,
)
from .geodesy import GeoPoint, PlanePoint, project_conus_albers

__all__ = [
    "DropReason",
    "DropRecord",
    "FrameRequest",
    "GpsSample",
    "GpsTrack",
    "MatchRecord",
    "ParcelRecord",
    "SpatialIndex",
    "VideoMeta",
    "assign_output_names",
    "build_frame_manifest",
    "build_parcel_index",
    "dedupe_matches",
    "frame_output_name",
    "frame_timestamp",
    "match_samples",
    "match_track",
]

DEFAULT_BUFFER_M = 25.0


@dataclass(frozen=True)
class ParcelRecord:
    """A reference building: dense 1..n object_id, centroid, pass-through attrs."""

    object_id: int
    source_key: str
    centroid: GeoPoint
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.object_id < 1:
            raise InputError(f"object_id must be positive, got {self.object_id}")


@dataclass(frozen=True)
class GpsSample:
    """One GPS row; row_index doubles as the video frame number."""

    row_index: int
    position: GeoPoint
    speed: float = 0.0
    course: float = 0.0  # pass-through; headings are re-estimated from positions


@dataclass(frozen=True)
class GpsTrack:
    video_id: str
    samples: tuple[GpsSample, ...]
    fps: float
    total_frames: int

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise InputError(f"fps must be positive, got {self.fps}")
        if not self.samples:
            raise EmptyInputError(f"track {self.video_id} has no samples")
        rows = [s.row_index for s in self.samples]
        if any(b <= a for a, b in zip(rows, rows[1:])):
            raise InputError(f"track {self.video_id}: row_index not strictly increasing")


@dataclass(frozen=True)
class MatchRecord:
    object_id: int
    video_id: str
    frame_number: int
    vehicle_position: GeoPoint
    distance_m: float
    heading: Optional[float] = None  # filled by the rectification stage


class DropReason(Enum):
    INVALID_FRAME_INDEX = "InvalidFrameIndex"
    MISSING_GPS_ROW = "MissingGpsRow"
    DEWARP_SKIPPED = "DewarpSkipped"
    STATIONARY = "Stationary"
    NO_CANDIDATE = "NoCandidate"


@dataclass(frozen=True)
class DropRecord:
    video_id: str
    frame_number: int
    reason: DropReason


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    fps: float
    total_frames: int


@dataclass(frozen=True)
class FrameRequest:
    """One manifest row: the contract handed to the external frame decoder."""

    video_id: str
    timestamp_s: float
    output_name: str


class SpatialIndex:
    """Buffered-parcel lookup in plane coordinates.

    A kd-tree over parcel centroids answers "whose buffer contains this
    point" via a radius query; candidates already satisfy the exact
    circular-buffer test (distance <= buffer_m).
    """

    def __init__(self, parcels: Sequence[ParcelRecord], buffer_m: float = DEFAULT_BUFFER_M):
        if not parcels:
            raise EmptyInputError("cannot index zero parcels")
        if buffer_m <= 0:
            raise InputError(f"buffer_m must be positive, got {buffer_m}")
        self.buffer_m = float(buffer_m)
        self.parcels = tuple(parcels)
        pts = [project_conus_albers(p.centroid) for p in parcels]
        self._xy = np.array([(pt.x, pt.y) for pt in pts], dtype=float)
        self._tree = cKDTree(self._xy)

    def plane_point(self, object_id: int) -> PlanePoint:
        for i, p in enumerate(self.parcels):
            if p.object_id == object_id:
                return PlanePoint(*self._xy[i])
        raise InputError(f"unknown object_id {object_id}")

    def candidates(self, point: PlanePoint) -> list[tuple[ParcelRecord, float]]:
        """All parcels whose buffer contains ``point``, with exact distances."""
        idx = self._tree.query_ball_point([point.x, point.y], r=self.buffer_m)
        out = []
        for i in sorted(idx):
            d = float(np.hypot(self._xy[i, 0] - point.x, self._xy[i, 1] - point.y))
            out.append((self.parcels[i], d))
        return out

    def nearest_within_buffer(self, point: PlanePoint) -> Optional[tuple[ParcelRecord, float]]:
        """Nearest candidate; distance ties resolved to the lower object_id."""
        cands = self.candidates(point)
        if not cands:
            return None
        return min(cands, key=lambda c: (c[1], c[0].object_id))


def build_parcel_index(
    parcels: Sequence[ParcelRecord], buffer_m: float = DEFAULT_BUFFER_M
) -> SpatialIndex:
    return SpatialIndex(parcels, buffer_m)


def match_samples(
    track: GpsTrack, index: SpatialIndex
) -> tuple[list[MatchRecord], list[DropRecord]]:
    """Per-sample matching before deduplication.

    Every sample yields exactly one MatchRecord (nearest in-buffer parcel)
    or one DropRecord(NoCandidate).
    """
    matches: list[MatchRecord] = []
    drops: list[DropRecord] = []
    for s in track.samples:
        hit = index.nearest_within_buffer(project_conus_albers(s.position))
        if hit is None:
            drops.append(DropRecord(track.video_id, s.row_index, DropReason.NO_CANDIDATE))
            continue
        parcel, dist = hit
        matches.append(
            MatchRecord(
                object_id=parcel.object_id,
                video_id=track.video_id,
                frame_number=s.row_index,
                vehicle_position=s.position,
                distance_m=dist,
            )
        )
    return matches, drops


def dedupe_matches(matches: Sequence[MatchRecord]) -> list[MatchRecord]:
    """Keep one match per (object_id, video_id): minimum distance, then
    minimum frame_number. Output ordered by (video_id, frame_number)."""
    best: dict[tuple[int, str], MatchRecord] = {}
    for m in matches:
        key = (m.object_id, m.video_id)
        cur = best.get(key)
        if cur is None or (m.distance_m, m.frame_number) < (cur.distance_m, cur.frame_number):
            best[key] = m
    return sorted(best.values(), key=lambda m: (m.video_id, m.frame_number, m.object_id))


def match_track(
    track: GpsTrack, index: SpatialIndex
) -> tuple[list[MatchRecord], list[DropRecord]]:
    """Match one track and deduplicate; drops pass through unchanged."""
    matches, drops = match_samples(track, index)
    return dedupe_matches(matches), drops


def frame_timestamp(frame_number: int, fps: float, total_frames: int) -> float:
    """Seconds into the video for a frame: ``frame_number / fps``."""
    if fps <= 0:
        raise InputError(f"fps must be positive, got {fps}")
    if frame_number < 0 or frame_number >= total_frames:
        raise InvalidFrameIndexError(
            f"frame {frame_number} outside [0, {total_frames})"
        )
    return frame_number / fps


def frame_output_name(object_id: int, ordinal: int = 0, suffix: str = ".jpg") -> str:
    """Frames are named by object id; repeat matches get an ordinal suffix."""
    if ordinal == 0:
        return f"{object_id}{suffix}"
    return f"{object_id}_{ordinal}{suffix}"


def assign_output_names(
    matches: Sequence[MatchRecord], suffix: str = ".jpg"
) -> dict[tuple[int, str, int], str]:
    """Deterministic output file name per match.

    Keys are (object_id, video_id, frame_number); ordinals are assigned in
    (object_id, video_id, frame_number) order so every stage derives the
    same names from the same matched table.
    """
    ordered = sorted(matches, key=lambda m: (m.object_id, m.video_id, m.frame_number))
    names: dict[tuple[int, str, int], str] = {}
    per_object: dict[int, int] = {}
    for m in ordered:
        ordinal = per_object.get(m.object_id, 0)
        per_object[m.object_id] = ordinal + 1
        names[(m.object_id, m.video_id, m.frame_number)] = frame_output_name(
            m.object_id, ordinal, suffix
        )
    return names


def build_frame_manifest(
    matches: Sequence[MatchRecord],
    metadata: Mapping[str, VideoMeta],
    suffix: str = ".jpg",
) -> tuple[list[FrameRequest], list[DropRecord], dict[tuple[int, str, int], str]]:
    """One decoder request per valid match.

    Returns the manifest (ordered by video then timestamp), drop records
    for out-of-range frames, and the match -> output_name assignment keyed
    by (object_id, video_id, frame_number). Names are assigned after the
    frame-validity filter, so they match ``assign_output_names`` over the
    surviving matches.

    Raises MissingVideoMetadataError when a match references a video with
    no fps / frame-count entry.
    """
    kept: list[tuple[MatchRecord, float]] = []
    drops: list[DropRecord] = []
    for m in matches:
        meta = metadata.get(m.video_id)
        if meta is None:
            raise MissingVideoMetadataError(f"no video metadata for {m.video_id!r}")
        try:
            t = frame_timestamp(m.frame_number, meta.fps, meta.total_frames)
        except InvalidFrameIndexError:
            drops.append(
                DropRecord(m.video_id, m.frame_number, DropReason.INVALID_FRAME_INDEX)
            )
            continue
        kept.append((m, t))
    names = assign_output_names([m for m, _ in kept], suffix)
    rows = [
        FrameRequest(m.video_id, t, names[(m.object_id, m.video_id, m.frame_number)])
        for m, t in kept
    ]
    rows.sort(key=lambda r: (r.video_id, r.timestamp_s, r.output_name))
    return rows, drops, names


def with_heading(match: MatchRecord, heading: float) -> MatchRecord:
    return replace(match, heading=heading)
