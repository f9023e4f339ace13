"""File formats: parcel/GPS ingestion and the pipeline's CSV/JSON/GeoJSON tables.

All writers emit deterministic bytes for identical inputs: fixed column
order, stable row ordering chosen by the caller, shortest-round-trip float
formatting, sorted JSON keys.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .attributes import ATTRIBUTE_KEYS, AttributeVector
from .change import ChangeClass, ChangeRecord
from .decision import OccupancyLabel, Strategy, VisitLabelRecord
from .errors import EmptyInputError, InputError
from .geodesy import GeoPoint
from .linkage import (
    DropReason,
    DropRecord,
    FrameRequest,
    GpsSample,
    GpsTrack,
    MatchRecord,
    ParcelRecord,
    VideoMeta,
)

__all__ = [
    "clean_video_id",
    "polygon_centroid",
    "read_attributes_csv",
    "read_gps_csv",
    "read_ground_truth_frames",
    "read_manifest_csv",
    "read_matched_csv",
    "read_parcels",
    "read_video_metadata",
    "read_visit_labels_csv",
    "write_attributes_csv",
    "write_rows",
    "write_change_csv",
    "write_drops_csv",
    "write_frame_labels_csv",
    "write_geojson_points",
    "write_json",
    "write_manifest_csv",
    "write_matched_csv",
    "write_visit_labels_csv",
]

_VIDEO_EXTENSIONS = (".mp4", ".mov", ".avi", ".mkv", ".360", ".lrv")


def clean_video_id(name: str) -> str:
    """Base identifier from a GPS or video filename."""
    stem = Path(name).name.strip()
    if stem.lower().endswith(".csv"):
        stem = stem[:-4]
    lowered = stem.lower()
    for ext in _VIDEO_EXTENSIONS:
        if lowered.endswith(ext):
            stem = stem[: -len(ext)]
            break
    return stem.strip()


def polygon_centroid(ring: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Area-weighted centroid of a (lon, lat) exterior ring.

    Falls back to the vertex mean for degenerate (zero-area) rings.
    """
    pts = [(float(x), float(y)) for x, y in ring]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    if not pts:
        raise InputError("empty polygon ring")
    area2 = 0.0
    cx = cy = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        cross = x0 * y1 - x1 * y0
        area2 += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    if abs(area2) < 1e-14:
        return (sum(x for x, _ in pts) / len(pts), sum(y for _, y in pts) / len(pts))
    return cx / (3.0 * area2), cy / (3.0 * area2)


def _feature_centroid(geometry: Mapping) -> tuple[float, float]:
    gtype = geometry.get("type")
    coords = geometry.get("coordinates")
    if gtype == "Point":
        return float(coords[0]), float(coords[1])
    if gtype == "Polygon":
        return polygon_centroid(coords[0])
    if gtype == "MultiPolygon":
        # largest exterior ring decides
        rings = [ring[0] for ring in coords]
        biggest = max(rings, key=len)
        return polygon_centroid(biggest)
    raise InputError(f"unsupported geometry type: {gtype}")


def read_parcels(path: str | Path) -> list[ParcelRecord]:
    """Load reference parcels from GeoJSON (Point/Polygon) or CSV (lat, lon).

    Object ids are assigned densely 1..n in input order; every other
    property/column passes through as a string attribute.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"parcel file not found: {path}")
    if path.suffix.lower() in (".geojson", ".json"):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        features = doc.get("features", [])
        if not features:
            raise EmptyInputError(f"no features in {path}")
        parcels = []
        for i, feat in enumerate(features):
            lon, lat = _feature_centroid(feat.get("geometry") or {})
            props = feat.get("properties") or {}
            source_key = str(feat.get("id", props.get("id", i)))
            attrs = {str(k): str(v) for k, v in props.items()}
            parcels.append(
                ParcelRecord(i + 1, source_key, GeoPoint(lat, lon), attrs)
            )
        return parcels
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyInputError(f"no header row in {path}")
        cols = {c.lower(): c for c in reader.fieldnames}
        if "lat" not in cols or "lon" not in cols:
            raise InputError(f"{path} must have lat and lon columns")
        parcels = []
        for i, row in enumerate(reader):
            try:
                lat = float(row[cols["lat"]])
                lon = float(row[cols["lon"]])
            except (TypeError, ValueError) as exc:
                raise InputError(f"{path} row {i + 1}: bad coordinates") from exc
            source_key = str(row.get(cols.get("id", ""), i))
            attrs = {
                k: str(v)
                for k, v in row.items()
                if k not in (cols["lat"], cols["lon"])
            }
            parcels.append(ParcelRecord(i + 1, source_key, GeoPoint(lat, lon), attrs))
    if not parcels:
        raise EmptyInputError(f"no parcel rows in {path}")
    return parcels


def read_gps_csv(
    path: str | Path,
    fps: float,
    total_frames: Optional[int] = None,
    video_id: Optional[str] = None,
) -> tuple[GpsTrack, list[DropRecord]]:
    """One GPS log: columns latitude, longitude, speed, course; row = frame.

    Rows with unparseable coordinates become DropRecord(MissingGpsRow) and
    are skipped; the row position keeps counting so frame numbers stay
    aligned with the video.
    """
    path = Path(path)
    vid = video_id if video_id is not None else clean_video_id(path.name)
    samples: list[GpsSample] = []
    drops: list[DropRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyInputError(f"no header row in {path}")
        cols = {c.lower().strip(): c for c in reader.fieldnames}
        for required in ("latitude", "longitude"):
            if required not in cols:
                raise InputError(f"{path} missing required column {required!r}")
        for row_index, row in enumerate(reader):
            try:
                lat = float(row[cols["latitude"]])
                lon = float(row[cols["longitude"]])
                position = GeoPoint(lat, lon)
            except (TypeError, ValueError, InputError):
                drops.append(DropRecord(vid, row_index, DropReason.MISSING_GPS_ROW))
                continue
            speed = _float_or(row.get(cols.get("speed", ""), ""), 0.0)
            course = _float_or(row.get(cols.get("course", ""), ""), 0.0)
            samples.append(GpsSample(row_index, position, speed, course))
    if not samples:
        raise EmptyInputError(f"no usable GPS rows in {path}")
    n_rows = samples[-1].row_index + 1
    track = GpsTrack(
        video_id=vid,
        samples=tuple(samples),
        fps=fps,
        total_frames=total_frames if total_frames is not None else n_rows,
    )
    return track, drops


def _float_or(text, default: float) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        return default


def read_video_metadata(path: str | Path) -> dict[str, VideoMeta]:
    """CSV with columns video_id, fps, total_frames."""
    out: dict[str, VideoMeta] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            vid = clean_video_id(row["video_id"])
            out[vid] = VideoMeta(vid, float(row["fps"]), int(row["total_frames"]))
    return out


# -- pipeline tables ---------------------------------------------------------

def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


MATCHED_HEADER = [
    "object_id",
    "source_key",
    "video_id",
    "frame_number",
    "vehicle_lat",
    "vehicle_lon",
    "distance_m",
    "heading",
]


def write_matched_csv(
    path: str | Path,
    matches: Sequence[MatchRecord],
    parcels_by_id: Mapping[int, ParcelRecord],
) -> None:
    rows = []
    for m in sorted(matches, key=lambda m: (m.object_id, m.video_id, m.frame_number)):
        rows.append(
            [
                m.object_id,
                parcels_by_id[m.object_id].source_key,
                m.video_id,
                m.frame_number,
                repr(m.vehicle_position.lat),
                repr(m.vehicle_position.lon),
                repr(m.distance_m),
                "" if m.heading is None else repr(m.heading),
            ]
        )
    write_rows(path, MATCHED_HEADER, rows)


def read_matched_csv(path: str | Path) -> list[MatchRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                MatchRecord(
                    object_id=int(row["object_id"]),
                    video_id=row["video_id"],
                    frame_number=int(row["frame_number"]),
                    vehicle_position=GeoPoint(
                        float(row["vehicle_lat"]), float(row["vehicle_lon"])
                    ),
                    distance_m=float(row["distance_m"]),
                    heading=float(row["heading"]) if row.get("heading") else None,
                )
            )
    return out


def write_manifest_csv(path: str | Path, manifest: Sequence[FrameRequest]) -> None:
    write_rows(
        path,
        ["video_id", "timestamp_s", "output_name"],
        [[r.video_id, repr(r.timestamp_s), r.output_name] for r in manifest],
    )


def read_manifest_csv(path: str | Path) -> list[FrameRequest]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            FrameRequest(row["video_id"], float(row["timestamp_s"]), row["output_name"])
            for row in csv.DictReader(fh)
        ]


def write_drops_csv(path: str | Path, drops: Sequence[DropRecord]) -> None:
    ordered = sorted(drops, key=lambda d: (d.video_id, d.frame_number, d.reason.value))
    write_rows(
        path,
        ["video_id", "frame_number", "reason"],
        [[d.video_id, d.frame_number, d.reason.value] for d in ordered],
    )


ATTRIBUTES_HEADER = ["object_id", "visit", "output_name", "status", *ATTRIBUTE_KEYS]


def write_attributes_csv(path: str | Path, rows: Sequence[dict]) -> None:
    """Rows: object_id, visit, output_name, status, attrs (AttributeVector|None)."""
    table = []
    for r in sorted(rows, key=lambda r: (r["object_id"], r["output_name"])):
        attrs: Optional[AttributeVector] = r.get("attrs")
        flags = (
            ["" for _ in ATTRIBUTE_KEYS]
            if attrs is None
            else [str(v).lower() for v in attrs.to_dict().values()]
        )
        table.append([r["object_id"], r["visit"], r["output_name"], r["status"], *flags])
    write_rows(path, ATTRIBUTES_HEADER, table)


def read_attributes_csv(path: str | Path) -> list[dict]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["status"] == "Ok":
                attrs = AttributeVector.from_mapping(
                    {k: row[k] == "true" for k in ATTRIBUTE_KEYS}
                )
            else:
                attrs = None
            out.append(
                {
                    "object_id": int(row["object_id"]),
                    "visit": row["visit"],
                    "output_name": row["output_name"],
                    "status": row["status"],
                    "attrs": attrs,
                }
            )
    return out


def write_frame_labels_csv(path: str | Path, rows: Sequence[dict]) -> None:
    """Rows: object_id, visit, output_name, strategy, label."""
    table = [
        [r["object_id"], r["visit"], r["output_name"], r["strategy"].value, r["label"].value]
        for r in sorted(
            rows, key=lambda r: (r["object_id"], r["output_name"], r["strategy"].value)
        )
    ]
    write_rows(path, ["object_id", "visit", "output_name", "strategy", "label"], table)


VISIT_LABELS_HEADER = [
    "object_id",
    "visit",
    "strategy",
    "label",
    "n_frames_used",
    "excluded",
    "audit",
]


def write_visit_labels_csv(path: str | Path, records: Sequence[VisitLabelRecord]) -> None:
    ordered = sorted(records, key=lambda r: (r.object_id, r.visit, r.strategy.value))
    write_rows(
        path,
        VISIT_LABELS_HEADER,
        [
            [
                r.object_id,
                r.visit,
                r.strategy.value,
                r.label.value,
                r.n_frames_used,
                str(r.excluded).lower(),
                r.audit,
            ]
            for r in ordered
        ],
    )


def read_visit_labels_csv(path: str | Path) -> list[VisitLabelRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                VisitLabelRecord(
                    object_id=int(row["object_id"]),
                    visit=row["visit"],
                    strategy=Strategy(row["strategy"]),
                    label=OccupancyLabel(row["label"]),
                    n_frames_used=int(row["n_frames_used"]),
                    excluded=row["excluded"] == "true",
                    audit=row.get("audit", ""),
                )
            )
    return out


def read_ground_truth_frames(path: str | Path) -> list[dict]:
    """Frame-level annotations: object_id, visit, label ('Not Occupied' ok)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                {
                    "object_id": int(row["object_id"]),
                    "visit": row["visit"],
                    "label": OccupancyLabel.parse(row["label"]),
                }
            )
    if not out:
        raise EmptyInputError(f"no ground-truth rows in {path}")
    return out


def write_change_csv(path: str | Path, records: Sequence[ChangeRecord]) -> None:
    ordered = sorted(records, key=lambda r: r.object_id)
    write_rows(
        path,
        ["object_id", "v1", "v2", "change_class"],
        [
            [
                r.object_id,
                "" if r.v1 is None else r.v1.value,
                "" if r.v2 is None else r.v2.value,
                r.change_class.value,
            ]
            for r in ordered
        ],
    )


def read_change_csv(path: str | Path) -> list[ChangeRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                ChangeRecord(
                    object_id=int(row["object_id"]),
                    v1=OccupancyLabel(row["v1"]) if row["v1"] else None,
                    v2=OccupancyLabel(row["v2"]) if row["v2"] else None,
                    change_class=ChangeClass(row["change_class"]),
                )
            )
    return out


def write_json(path: str | Path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_geojson_points(
    path: str | Path,
    features: Sequence[tuple[int, GeoPoint, Mapping[str, object]]],
) -> None:
    """Point layer in EPSG:4326; features ordered and keyed by object_id."""
    ordered = sorted(features, key=lambda f: f[0])
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "id": oid,
                "geometry": {"type": "Point", "coordinates": [pt.lon, pt.lat]},
                "properties": {"object_id": oid, **dict(props)},
            }
            for oid, pt, props in ordered
        ],
    }
    write_json(path, doc)
