"""Declarative run configuration: one JSON file per survey campaign.

Paths are resolved relative to the config file location. Every tunable
defaults to the values the analyses were designed around (25 m buffer,
+-15 frame heading window, -90 degree calibration offset, 90 degree
field of view, 1920 px output, tau = 2, and so on); command-line flags
override file values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .errors import InputError
from .vlm import BackendConfig

__all__ = ["PipelineConfig", "load_config"]


@dataclass(frozen=True)
class PipelineConfig:
    parcels: Path
    gps_dir: Path
    out_dir: Path
    video_dir: Optional[Path] = None
    frames_dir: Optional[Path] = None
    rectified_dir: Optional[Path] = None
    cache_dir: Optional[Path] = None
    ground_truth: Optional[Path] = None
    video_metadata: Optional[Path] = None
    visit: str = "V1"

    buffer_m: float = 25.0
    half_window: int = 15
    calib_offset: float = -90.0
    hfov: float = 90.0
    out_width: int = 1920
    tau: int = 2
    pano_ratio: float = 1.9
    stationary_eps_m: float = 0.5
    k_neighbors: int = 8
    bootstrap_n: int = 10_000
    permutations: int = 999
    seed: Optional[int] = None
    default_fps: float = 30.0
    jobs: int = 1
    resume: bool = False

    backend: BackendConfig = field(default_factory=BackendConfig)
    decoder_cmd_template: Optional[str] = None

    def __post_init__(self) -> None:
        if self.buffer_m <= 0:
            raise InputError(f"buffer_m must be positive, got {self.buffer_m}")
        if self.visit not in ("V1", "V2"):
            raise InputError(f"visit must be V1 or V2, got {self.visit!r}")

    def frames_path(self) -> Path:
        return self.frames_dir or (self.out_dir / self.visit / "frames")

    def rectified_path(self) -> Path:
        return self.rectified_dir or (self.out_dir / self.visit / "rectified")

    def cache_path(self) -> Path:
        return self.cache_dir or (self.out_dir / "cache")

    def visit_dir(self, visit: Optional[str] = None) -> Path:
        return self.out_dir / (visit or self.visit)

    def config_hash(self) -> str:
        doc = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, BackendConfig):
                v = {k: str(val) for k, val in vars(v).items()}
            doc[f.name] = v
        canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_PARAM_KEYS = {
    "buffer_m": float,
    "half_window": int,
    "calib_offset": float,
    "hfov": float,
    "out_width": int,
    "tau": int,
    "pano_ratio": float,
    "stationary_eps_m": float,
    "k_neighbors": int,
    "bootstrap_n": int,
    "permutations": int,
    "seed": int,
    "default_fps": float,
    "jobs": int,
}

_PATH_KEYS = (
    "parcels",
    "gps_dir",
    "video_dir",
    "frames_dir",
    "rectified_dir",
    "cache_dir",
    "out_dir",
    "ground_truth",
    "video_metadata",
)


def load_config(path: str | Path, **overrides) -> PipelineConfig:
    """Parse a JSON config file; keyword overrides win over file values."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except ValueError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}") from exc
    base = path.parent

    kwargs: dict = {}
    paths = doc.get("paths", {})
    for key in _PATH_KEYS:
        if paths.get(key) is not None:
            kwargs[key] = (base / paths[key]).resolve()
    if "parcels" not in kwargs or "gps_dir" not in kwargs or "out_dir" not in kwargs:
        raise InputError(f"{path}: paths.parcels, paths.gps_dir, paths.out_dir are required")

    params = doc.get("parameters", {})
    for key, cast in _PARAM_KEYS.items():
        if params.get(key) is not None:
            kwargs[key] = cast(params[key])
    if "visit" in doc:
        kwargs["visit"] = str(doc["visit"])

    backend_doc = dict(doc.get("backend", {}))
    if float(backend_doc.pop("temperature", 0)) != 0:
        raise InputError("backend temperature is fixed at 0 and cannot be configured")
    backend_kwargs = {}
    for key in (
        "endpoint_url",
        "model_name",
        "api_key_env_var",
        "max_tokens_vision",
        "max_tokens_decision",
        "request_timeout_s",
        "max_concurrent_requests",
    ):
        if backend_doc.get(key) is not None:
            backend_kwargs[key] = backend_doc[key]
    if backend_doc.get("fixture_path"):
        backend_kwargs["fixture_path"] = (base / backend_doc["fixture_path"]).resolve()
    kwargs["backend"] = BackendConfig(**backend_kwargs)

    if doc.get("decoder_cmd_template"):
        kwargs["decoder_cmd_template"] = str(doc["decoder_cmd_template"])

    cfg = PipelineConfig(**kwargs)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg
