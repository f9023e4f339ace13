"""streetscan: street-level survey video to parcel-level occupancy.

A library plus a small CLI that links panoramic survey video and GPS logs
to reference parcels, rectifies facade views out of equirectangular
frames, extracts a closed nine-indicator attribute schema through a
pluggable vision-language backend, applies two decision strategies
(a transparent threshold rule and a conservative few-shot reasoning
stage), tracks two-visit occupancy change, and evaluates everything with
paired bootstrap, McNemar, and global Moran's I diagnostics.
"""

from .attributes import ATTRIBUTE_KEYS, AttributeVector
from .change import (
    AgreementCategory,
    ChangeClass,
    ChangeRecord,
    agreement_category,
    change_class,
    coverage,
    net_recovery,
)
from .decision import (
    OccupancyLabel,
    RiskSummary,
    Strategy,
    VisitLabelRecord,
    consolidate_visit,
    consolidate_visit_detail,
    one_stage_label,
    risk_count,
)
from .geodesy import (
    GeoPoint,
    PlanePoint,
    bearing_deg,
    haversine_m,
    normalize_0_360,
    normalize_pm180,
    project_conus_albers,
    unproject_conus_albers,
)
from .linkage import (
    DropReason,
    DropRecord,
    FrameRequest,
    GpsSample,
    GpsTrack,
    MatchRecord,
    ParcelRecord,
    SpatialIndex,
    VideoMeta,
    assign_output_names,
    build_frame_manifest,
    build_parcel_index,
    dedupe_matches,
    frame_output_name,
    frame_timestamp,
    match_samples,
    match_track,
)
from .rectify import (
    HeadingEstimate,
    compute_yaw,
    dewarp,
    estimate_heading,
    is_panoramic,
    load_image,
    save_image,
)
from .stats import (
    BootstrapResult,
    ConfusionMatrix,
    MetricComparison,
    MetricSet,
    MoranMethod,
    MoranResult,
    SpatialWeights,
    confusion,
    knn_weights,
    mcnemar,
    metrics,
    morans_i,
    paired_bootstrap,
)
from .vlm import (
    Backend,
    BackendConfig,
    CachedBackend,
    ChatRequest,
    ExtractionResult,
    ExtractionStatus,
    HttpBackend,
    RecordedBackend,
    build_decision_request,
    build_vision_request,
    decide_two_stage,
    extract_attributes,
    load_prompt,
    request_key,
)

__version__ = "0.1.0"
