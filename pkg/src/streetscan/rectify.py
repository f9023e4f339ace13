"""Vehicle heading estimation and facade-centered panorama dewarping.

Headings come from short GPS windows around the matched frame: the bearing
from the mean position of samples strictly before the frame to the mean
position of samples at/after it. The yaw that centers a facade is

    yaw = normalize_pm180(bearing_to_building - heading + calib_offset)

and drives a rectilinear projection out of the equirectangular panorama.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DegenerateImageError,
    InputError,
    NotPanoramicError,
    StationaryError,
)
from .geodesy import GeoPoint, bearing_deg, haversine_m, normalize_pm180
from .linkage import GpsTrack

__all__ = [
    "HeadingEstimate",
    "compute_yaw",
    "dewarp",
    "estimate_heading",
    "is_panoramic",
    "load_image",
    "save_image",
]

DEFAULT_HALF_WINDOW = 15
DEFAULT_STATIONARY_EPS_M = 0.5
DEFAULT_CALIB_OFFSET = -90.0
DEFAULT_HFOV = 90.0
DEFAULT_OUT_WIDTH = 1920
DEFAULT_ASPECT = 16.0 / 9.0
DEFAULT_PANO_RATIO = 1.9


@dataclass(frozen=True)
class HeadingEstimate:
    heading: float  # degrees in [0, 360)
    window_before: int
    window_after: int
    displacement_m: float


def _mean_position(samples) -> GeoPoint:
    return GeoPoint(
        sum(s.position.lat for s in samples) / len(samples),
        sum(s.position.lon for s in samples) / len(samples),
    )


def estimate_heading(
    track: GpsTrack,
    frame_number: int,
    half_window: int = DEFAULT_HALF_WINDOW,
    stationary_eps_m: float = DEFAULT_STATIONARY_EPS_M,
) -> HeadingEstimate:
    """Heading at a frame from mean-before -> mean-at/after positions.

    Windows hold up to ``half_window`` samples on each side of the pivot
    (strictly before vs at-and-after, selected by row index so missing GPS
    rows are skipped naturally) and truncate at track edges. At the very
    first frame, where nothing precedes the pivot, the earliest at/after
    sample stands in as the "before" side.

    Raises StationaryError when the window displacement is below
    ``stationary_eps_m`` (such frames get dropped, never a noise heading)
    and InputError for frames outside the track.
    """
    if half_window < 1:
        raise InputError(f"half_window must be >= 1, got {half_window}")
    first, last = track.samples[0].row_index, track.samples[-1].row_index
    if frame_number < first or frame_number > last:
        raise InputError(
            f"frame {frame_number} outside track rows [{first}, {last}]"
        )
    before = [
        s for s in track.samples if frame_number - half_window <= s.row_index < frame_number
    ]
    after = [
        s for s in track.samples if frame_number <= s.row_index < frame_number + half_window
    ]
    if not after:
        # frame sits in a gap right before the track end
        after = [s for s in track.samples if s.row_index >= frame_number][:1] or [
            track.samples[-1]
        ]
    if not before:
        before = after[:1]
    mean_before = _mean_position(before)
    mean_after = _mean_position(after)
    displacement = haversine_m(mean_before, mean_after)
    if displacement < stationary_eps_m:
        raise StationaryError(
            f"window displacement {displacement:.3f} m below {stationary_eps_m} m"
        )
    return HeadingEstimate(
        heading=bearing_deg(mean_before, mean_after),
        window_before=len(before),
        window_after=len(after),
        displacement_m=displacement,
    )


def compute_yaw(
    heading: float,
    bearing_to_building: float,
    calib_offset: float = DEFAULT_CALIB_OFFSET,
) -> float:
    """Yaw in (-180, 180] that points the virtual camera at the facade."""
    for v in (heading, bearing_to_building, calib_offset):
        if not math.isfinite(v):
            raise InputError(f"non-finite angle: {v}")
    return normalize_pm180(bearing_to_building - heading + calib_offset)


def is_panoramic(width: int, height: int, min_ratio: float = DEFAULT_PANO_RATIO) -> bool:
    """Wide-aspect test for equirectangular input (2:1 with margin below 16:9)."""
    if width < 1 or height < 1:
        raise InputError(f"dimensions must be positive, got {width}x{height}")
    return width / height >= min_ratio


def dewarp(
    pano: np.ndarray,
    yaw: float,
    hfov: float = DEFAULT_HFOV,
    out_width: int = DEFAULT_OUT_WIDTH,
    aspect: float = DEFAULT_ASPECT,
    pano_ratio: float = DEFAULT_PANO_RATIO,
) -> np.ndarray:
    """Rectilinear view extracted from an equirectangular panorama.

    Pinhole rays for each output pixel (u, v):

        x = (2u/W - 1) * tan(hfov/2)
        y = (1 - 2v/H) * tan(vfov/2),  tan(vfov/2) = tan(hfov/2) * H/W
        z = 1

    rotated about the vertical axis by ``yaw`` (pitch = roll = 0; capture
    used horizon lock), then mapped to source longitude/latitude

        lon = atan2(x, z),  lat = asin(y / |d|)

    and sampled bilinearly with horizontal wrap at the +-180 seam and
    vertical clamp at the poles.
    """
    if pano.ndim != 3 or pano.shape[2] != 3:
        raise InputError(f"expected HxWx3 image, got shape {pano.shape}")
    src_h, src_w = pano.shape[:2]
    if src_w < 2 or src_h < 2:
        raise DegenerateImageError(f"panorama too small: {src_w}x{src_h}")
    if not is_panoramic(src_w, src_h, pano_ratio):
        raise NotPanoramicError(f"{src_w}x{src_h} is not a wide equirectangular frame")
    if not -180.0 <= yaw <= 180.0:
        raise InputError(f"yaw {yaw} outside [-180, 180]")
    if not 0.0 < hfov < 180.0:
        raise InputError(f"hfov {hfov} outside (0, 180)")

    w = int(out_width)
    h = int(round(out_width / aspect))
    if w < 2 or h < 2:
        raise DegenerateImageError(f"output too small: {w}x{h}")
    tan_h = math.tan(math.radians(hfov) / 2.0)
    tan_v = tan_h * (h / w)

    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    x = (2.0 * u / w - 1.0) * tan_h
    y = (1.0 - 2.0 * v / h) * tan_v
    xg, yg = np.meshgrid(x, y)

    # latitude is invariant under the vertical-axis rotation
    norm = np.sqrt(xg * xg + yg * yg + 1.0)
    lat = np.arcsin(yg / norm)
    a = math.radians(yaw)
    xr = xg * math.cos(a) + math.sin(a)
    zr = math.cos(a) - xg * math.sin(a)
    lon = np.arctan2(xr, zr)

    cols = (lon / (2.0 * math.pi) + 0.5) * src_w
    rows = (0.5 - lat / math.pi) * src_h
    return _bilinear_wrap(pano, cols, rows)


def _bilinear_wrap(img: np.ndarray, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Bilinear sampling with horizontal wrap and vertical clamp."""
    src_h, src_w = img.shape[:2]
    c0f = np.floor(cols)
    r0f = np.floor(rows)
    fc = (cols - c0f)[..., None]
    fr = (rows - r0f)[..., None]
    c0 = c0f.astype(np.int64) % src_w
    c1 = (c0 + 1) % src_w
    r0 = np.clip(r0f.astype(np.int64), 0, src_h - 1)
    r1 = np.clip(r0 + 1, 0, src_h - 1)
    p = img.astype(np.float64)
    top = p[r0, c0] * (1.0 - fc) + p[r0, c1] * fc
    bot = p[r1, c0] * (1.0 - fc) + p[r1, c1] * fc
    out = top * (1.0 - fr) + bot * fr
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def load_image(path: str | Path) -> np.ndarray:
    """Read a JPEG/PNG file as an HxWx3 uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_image(image: np.ndarray, path: str | Path, quality: int = 95) -> None:
    """Write an HxWx3 uint8 array as JPEG or PNG, by extension."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image).save(path, quality=quality)
