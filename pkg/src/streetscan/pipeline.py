"""Stage implementations: link, rectify, infer, change, evaluate, sweep-tau.

Stages communicate through files under ``out_dir/<visit>/`` so partial
reruns are safe; all randomized procedures draw from the config seed. A
run manifest (config hash, input hashes, timings, drop counts) lands under
``out_dir/runs/`` for auditability; timings make it the one output that is
not byte-reproducible, so determinism checks compare output trees minus
``runs/``.
"""

from __future__ import annotations

import hashlib
import shlex
import shutil
import subprocess
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import io as sio
from .change import (
    AgreementCategory,
    ChangeClass,
    ChangeRecord,
    agreement_category,
    change_class,
    coverage,
    net_recovery,
)
from .config import PipelineConfig
from .decision import (
    OccupancyLabel,
    Strategy,
    VisitLabelRecord,
    consolidate_visit_detail,
    one_stage_label,
)
from .errors import (
    EmptyInputError,
    InputError,
    MissingVisitError,
    StationaryError,
    TransportError,
    ZeroVarianceError,
)
from .geodesy import bearing_deg, project_conus_albers
from .linkage import (
    DropReason,
    DropRecord,
    GpsTrack,
    MatchRecord,
    VideoMeta,
    assign_output_names,
    build_frame_manifest,
    build_parcel_index,
    match_track,
    with_heading,
)
from .rectify import (
    compute_yaw,
    dewarp,
    estimate_heading,
    is_panoramic,
    load_image,
    save_image,
)
from .stats import (
    MoranMethod,
    confusion,
    knn_weights,
    mcnemar,
    metrics,
    morans_i,
    paired_bootstrap,
)
from .vlm import (
    Backend,
    CachedBackend,
    ExtractionStatus,
    HttpBackend,
    RecordedBackend,
    decide_two_stage,
    extract_attributes,
)

__all__ = [
    "cmd_change",
    "cmd_evaluate",
    "cmd_infer",
    "cmd_link",
    "cmd_rectify",
    "cmd_sweep_tau",
    "make_backend",
]

VIDEO_EXTENSIONS = ("", ".mp4", ".MP4", ".mov", ".MOV", ".avi", ".mkv", ".360", ".json")


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_run_manifest(
    cfg: PipelineConfig,
    stage: str,
    inputs: Sequence[Path],
    elapsed_s: float,
    drop_counts: dict[str, int],
    extra: Optional[dict] = None,
) -> None:
    input_hashes = {str(p): _hash_file(Path(p)) for p in inputs if Path(p).is_file()}
    payload = {
        "stage": stage,
        "visit": cfg.visit,
        "config_hash": cfg.config_hash(),
        "input_hashes": input_hashes,
        "elapsed_s": elapsed_s,
        "drop_counts": drop_counts,
        "run_id": hashlib.sha256(
            (cfg.config_hash() + stage + "".join(sorted(input_hashes.values()))).encode()
        ).hexdigest()[:16],
    }
    if extra:
        payload.update(extra)
    sio.write_json(cfg.out_dir / "runs" / f"{stage}_{cfg.visit}.json", payload)


def _load_tracks(
    cfg: PipelineConfig,
) -> tuple[list[GpsTrack], list[DropRecord], dict[str, VideoMeta]]:
    gps_dir = Path(cfg.gps_dir)
    if not gps_dir.is_dir():
        raise InputError(f"gps_dir does not exist: {gps_dir}")
    files = sorted(gps_dir.glob("*.csv"))
    if not files:
        raise EmptyInputError(f"no GPS CSV files in {gps_dir}")
    file_meta: dict[str, VideoMeta] = {}
    if cfg.video_metadata and Path(cfg.video_metadata).exists():
        file_meta = sio.read_video_metadata(cfg.video_metadata)
    tracks: list[GpsTrack] = []
    drops: list[DropRecord] = []
    metadata: dict[str, VideoMeta] = {}
    for f in files:
        vid = sio.clean_video_id(f.name)
        meta = file_meta.get(vid)
        fps = meta.fps if meta else cfg.default_fps
        total = meta.total_frames if meta else None
        track, t_drops = sio.read_gps_csv(f, fps=fps, total_frames=total, video_id=vid)
        tracks.append(track)
        drops.extend(t_drops)
        metadata[vid] = meta or VideoMeta(vid, track.fps, track.total_frames)
    return tracks, drops, metadata


def cmd_link(cfg: PipelineConfig) -> dict:
    """Match GPS tracks to parcels; write matched table, manifest, drops."""
    t0 = time.perf_counter()
    parcels = sio.read_parcels(cfg.parcels)
    index = build_parcel_index(parcels, cfg.buffer_m)
    tracks, drops, metadata = _load_tracks(cfg)
    matches: list[MatchRecord] = []
    for track in tracks:
        m, d = match_track(track, index)
        matches.extend(m)
        drops.extend(d)
    manifest, manifest_drops, _ = build_frame_manifest(matches, metadata)
    drops.extend(manifest_drops)

    visit_dir = cfg.visit_dir()
    parcels_by_id = {p.object_id: p for p in parcels}
    dropped_frames = {(d.video_id, d.frame_number) for d in manifest_drops}
    kept = [m for m in matches if (m.video_id, m.frame_number) not in dropped_frames]
    sio.write_matched_csv(visit_dir / "matched.csv", kept, parcels_by_id)
    sio.write_manifest_csv(visit_dir / "manifest.csv", manifest)
    sio.write_drops_csv(visit_dir / "link_drops.csv", drops)

    drop_counts = dict(Counter(d.reason.value for d in drops))
    _write_run_manifest(
        cfg,
        "link",
        [Path(cfg.parcels), *sorted(Path(cfg.gps_dir).glob("*.csv"))],
        time.perf_counter() - t0,
        drop_counts,
        {"matches": len(kept), "manifest_rows": len(manifest)},
    )
    return {"matches": len(kept), "manifest_rows": len(manifest), "drops": drop_counts}


def _find_video(video_dir: Optional[Path], video_id: str) -> Path:
    if video_dir is None:
        raise InputError("video_dir is required to run the frame decoder")
    for ext in VIDEO_EXTENSIONS:
        candidate = Path(video_dir) / f"{video_id}{ext}"
        if candidate.exists():
            return candidate
    raise InputError(f"no media file for video {video_id!r} in {video_dir}")


def _decode_frames(
    cfg: PipelineConfig, manifest, metadata: dict[str, VideoMeta]
) -> list[DropRecord]:
    """Invoke the external decoder for manifest rows whose frame is missing.

    The pipeline never decodes video itself; it verifies the decoder left
    the expected image behind and drops the frame otherwise.
    """
    frames_dir = cfg.frames_path()
    frames_dir.mkdir(parents=True, exist_ok=True)
    drops: list[DropRecord] = []
    if cfg.decoder_cmd_template is None:
        return drops
    tokens = shlex.split(cfg.decoder_cmd_template)
    for row in manifest:
        out_path = frames_dir / row.output_name
        if out_path.exists():
            continue
        video = _find_video(cfg.video_dir, row.video_id)
        cmd = [
            t.replace("{video}", str(video))
            .replace("{timestamp}", repr(row.timestamp_s))
            .replace("{out}", str(out_path))
            for t in tokens
        ]
        result = subprocess.run(cmd, capture_output=True, text=True)
        if result.returncode != 0 or not out_path.exists():
            meta = metadata.get(row.video_id)
            frame = int(round(row.timestamp_s * meta.fps)) if meta else -1
            drops.append(DropRecord(row.video_id, frame, DropReason.INVALID_FRAME_INDEX))
    return drops


def cmd_rectify(cfg: PipelineConfig) -> dict:
    """Estimate headings, dewarp panoramic frames, write the enriched table."""
    t0 = time.perf_counter()
    visit_dir = cfg.visit_dir()
    matched_path = visit_dir / "matched.csv"
    if not matched_path.exists():
        raise InputError(f"run link first: {matched_path} missing")
    matches = sio.read_matched_csv(matched_path)
    manifest = sio.read_manifest_csv(visit_dir / "manifest.csv")
    parcels = {p.object_id: p for p in sio.read_parcels(cfg.parcels)}
    tracks, _, metadata = _load_tracks(cfg)
    tracks_by_id = {t.video_id: t for t in tracks}
    names = assign_output_names(matches)

    decode_drops = _decode_frames(cfg, manifest, metadata)
    frames_dir = cfg.frames_path()
    rectified_dir = cfg.rectified_path()
    rectified_dir.mkdir(parents=True, exist_ok=True)

    def process(match: MatchRecord):
        name = names[(match.object_id, match.video_id, match.frame_number)]
        track = tracks_by_id.get(match.video_id)
        if track is None:
            raise InputError(f"no GPS track for video {match.video_id!r}")
        try:
            est = estimate_heading(
                track, match.frame_number, cfg.half_window, cfg.stationary_eps_m
            )
        except StationaryError:
            drop = DropRecord(match.video_id, match.frame_number, DropReason.STATIONARY)
            return match, drop, False
        src = frames_dir / name
        if not src.exists():
            drop = DropRecord(
                match.video_id, match.frame_number, DropReason.INVALID_FRAME_INDEX
            )
            return match, drop, False
        bearing = bearing_deg(match.vehicle_position, parcels[match.object_id].centroid)
        yaw = compute_yaw(est.heading, bearing, cfg.calib_offset)
        dst = rectified_dir / name
        passthrough_drop = None
        if not (cfg.resume and dst.exists()):
            image = load_image(src)
            h, w = image.shape[:2]
            if is_panoramic(w, h, cfg.pano_ratio):
                save_image(
                    dewarp(image, yaw, cfg.hfov, cfg.out_width, pano_ratio=cfg.pano_ratio),
                    dst,
                )
            else:
                shutil.copyfile(src, dst)  # pass-through stays bit-identical
                passthrough_drop = DropRecord(
                    match.video_id, match.frame_number, DropReason.DEWARP_SKIPPED
                )
        return with_heading(match, est.heading), passthrough_drop, True

    workers = max(1, cfg.jobs)
    ordered = sorted(matches, key=lambda m: (m.video_id, m.frame_number, m.object_id))
    if workers == 1:
        results = [process(m) for m in ordered]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, ordered))

    drops: list[DropRecord] = list(decode_drops)
    enriched: list[MatchRecord] = []
    n_processed = 0
    for match, drop, ok in results:
        enriched.append(match)
        if drop is not None:
            drops.append(drop)
        n_processed += int(ok)

    sio.write_matched_csv(visit_dir / "matched_with_heading.csv", enriched, parcels)
    sio.write_drops_csv(visit_dir / "rectify_drops.csv", drops)
    drop_counts = dict(Counter(d.reason.value for d in drops))
    _write_run_manifest(
        cfg,
        "rectify",
        [matched_path],
        time.perf_counter() - t0,
        drop_counts,
        {"frames_processed": n_processed},
    )
    return {"frames_processed": n_processed, "drops": drop_counts}


def make_backend(cfg: PipelineConfig) -> Backend:
    """Recorded backend when a fixture is configured, HTTP otherwise; cached."""
    b = cfg.backend
    inner: Backend
    if b.fixture_path:
        inner = RecordedBackend(b.fixture_path)
    else:
        inner = HttpBackend(b)
    return CachedBackend(inner, cfg.cache_path())


def cmd_infer(cfg: PipelineConfig, strategy: str = "both") -> dict:
    """Extract attributes once, label frames per strategy, consolidate visits.

    Both strategies share the single vision extraction pass; only the
    decision stages differ. Ground-truth frame annotations, when
    configured, are consolidated by the identical rule and appended to the
    visit table.
    """
    if strategy not in ("one_stage", "two_stage", "both"):
        raise InputError(f"unknown strategy {strategy!r}")
    t0 = time.perf_counter()
    visit_dir = cfg.visit_dir()
    enriched_path = visit_dir / "matched_with_heading.csv"
    if not enriched_path.exists():
        raise InputError(f"run rectify first: {enriched_path} missing")
    all_matches = sio.read_matched_csv(enriched_path)
    names = assign_output_names(all_matches)
    usable = [m for m in all_matches if m.heading is not None]
    rectified_dir = cfg.rectified_path()
    backend = make_backend(cfg)

    do_one = strategy in ("one_stage", "both")
    do_two = strategy in ("two_stage", "both")

    def process(match: MatchRecord):
        name = names[(match.object_id, match.video_id, match.frame_number)]
        path = rectified_dir / name
        if not path.exists():
            return None
        result = extract_attributes(path.read_bytes(), backend, cfg.backend)
        labels: dict[Strategy, OccupancyLabel] = {}
        transport = result.status is ExtractionStatus.TRANSPORT_ERROR
        if result.status is ExtractionStatus.OK:
            if do_one:
                labels[Strategy.ONE_STAGE] = one_stage_label(result.parsed, cfg.tau)
            if do_two:
                try:
                    labels[Strategy.TWO_STAGE] = decide_two_stage(
                        result.parsed, backend, cfg.backend
                    )
                except TransportError:
                    transport = True
                    labels[Strategy.TWO_STAGE] = OccupancyLabel.UNCERTAIN
        else:
            # unusable frame: conservative Uncertain under every strategy
            if do_one:
                labels[Strategy.ONE_STAGE] = OccupancyLabel.UNCERTAIN
            if do_two:
                labels[Strategy.TWO_STAGE] = OccupancyLabel.UNCERTAIN
        return match, name, result, labels, transport

    workers = max(1, cfg.backend.max_concurrent_requests)
    ordered = sorted(usable, key=lambda m: (m.object_id, m.video_id, m.frame_number))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = [r for r in pool.map(process, ordered) if r is not None]

    transport_errors = 0
    attr_rows, frame_rows = [], []
    frame_labels: dict[Strategy, dict[int, list[OccupancyLabel]]] = defaultdict(
        lambda: defaultdict(list)
    )
    for match, name, result, labels, transport in results:
        transport_errors += int(transport)
        attr_rows.append(
            {
                "object_id": match.object_id,
                "visit": cfg.visit,
                "output_name": name,
                "status": result.status.value,
                "attrs": result.parsed,
            }
        )
        for strat, label in labels.items():
            frame_rows.append(
                {
                    "object_id": match.object_id,
                    "visit": cfg.visit,
                    "output_name": name,
                    "strategy": strat,
                    "label": label,
                }
            )
            frame_labels[strat][match.object_id].append(label)

    visit_records: list[VisitLabelRecord] = []

    def consolidate(strat: Strategy, per_object: dict[int, list[OccupancyLabel]]) -> None:
        for oid, labels_ in sorted(per_object.items()):
            label, audit = consolidate_visit_detail(labels_)
            visit_records.append(
                VisitLabelRecord(
                    object_id=oid,
                    visit=cfg.visit,
                    strategy=strat,
                    label=label,
                    n_frames_used=len(labels_),
                    excluded=label is OccupancyLabel.UNCERTAIN,
                    audit=audit,
                )
            )

    for strat in (Strategy.ONE_STAGE, Strategy.TWO_STAGE):
        if strat in frame_labels:
            consolidate(strat, frame_labels[strat])
    if cfg.ground_truth and Path(cfg.ground_truth).exists():
        by_object: dict[int, list[OccupancyLabel]] = defaultdict(list)
        for r in sio.read_ground_truth_frames(cfg.ground_truth):
            if r["visit"] == cfg.visit:
                by_object[r["object_id"]].append(r["label"])
        consolidate(Strategy.GROUND_TRUTH, by_object)

    sio.write_attributes_csv(visit_dir / "attributes.csv", attr_rows)
    sio.write_frame_labels_csv(visit_dir / "frame_labels.csv", frame_rows)
    sio.write_visit_labels_csv(visit_dir / "visit_labels.csv", visit_records)
    _write_run_manifest(
        cfg,
        "infer",
        [enriched_path],
        time.perf_counter() - t0,
        {},
        {"frames": len(results), "transport_errors": transport_errors},
    )
    return {
        "frames": len(results),
        "transport_errors": transport_errors,
        "visit_records": len(visit_records),
    }


def _visit_labels(cfg: PipelineConfig) -> dict[Strategy, dict[str, dict[int, OccupancyLabel]]]:
    """labels[strategy][visit][object_id] from both visits' tables."""
    out: dict[Strategy, dict[str, dict[int, OccupancyLabel]]] = defaultdict(
        lambda: defaultdict(dict)
    )
    for visit in ("V1", "V2"):
        path = cfg.visit_dir(visit) / "visit_labels.csv"
        if not path.exists():
            raise MissingVisitError(f"missing consolidated labels for {visit}: {path}")
        for rec in sio.read_visit_labels_csv(path):
            out[rec.strategy][rec.visit][rec.object_id] = rec.label
    return out


def _changes_for(labels: dict[str, dict[int, OccupancyLabel]]) -> list[ChangeRecord]:
    ids = sorted(set(labels.get("V1", {})) | set(labels.get("V2", {})))
    return [
        ChangeRecord(
            oid,
            labels.get("V1", {}).get(oid),
            labels.get("V2", {}).get(oid),
            change_class(labels.get("V1", {}).get(oid), labels.get("V2", {}).get(oid)),
        )
        for oid in ids
    ]


def cmd_change(cfg: PipelineConfig) -> dict:
    """Change classes per strategy, net recovery, agreement partition."""
    t0 = time.perf_counter()
    labels = _visit_labels(cfg)
    out_dir = Path(cfg.out_dir)
    summary: dict[str, dict] = {}
    changes_by_strategy: dict[Strategy, dict[int, ChangeClass]] = {}
    for strat in (Strategy.GROUND_TRUTH, Strategy.ONE_STAGE, Strategy.TWO_STAGE):
        if strat not in labels:
            continue
        records = _changes_for(labels[strat])
        sio.write_change_csv(out_dir / f"change_{strat.value}.csv", records)
        classes = [r.change_class for r in records]
        summary[strat.value] = {
            "recovered": classes.count(ChangeClass.RECOVERED),
            "deteriorated": classes.count(ChangeClass.DETERIORATED),
            "stable_occupied": classes.count(ChangeClass.STABLE_OCCUPIED),
            "stable_not_occupied": classes.count(ChangeClass.STABLE_NOT_OCCUPIED),
            "excluded": classes.count(ChangeClass.EXCLUDED),
            "net_recovery": net_recovery(records),
            "coverage": coverage(records),
        }
        changes_by_strategy[strat] = {r.object_id: r.change_class for r in records}

    required = (Strategy.GROUND_TRUTH, Strategy.ONE_STAGE, Strategy.TWO_STAGE)
    if all(s in changes_by_strategy for s in required):
        gt_c, one_c, two_c = (changes_by_strategy[s] for s in required)
        mask = [
            oid
            for oid in sorted(set(gt_c) & set(one_c) & set(two_c))
            if gt_c[oid] is not ChangeClass.EXCLUDED
            and one_c[oid] is not ChangeClass.EXCLUDED
            and two_c[oid] is not ChangeClass.EXCLUDED
        ]
        counts: Counter = Counter()
        agreement_rows = []
        for oid in mask:
            category = agreement_category(gt_c[oid], one_c[oid], two_c[oid])
            audit = "" if category is not None else "three_way_disagreement"
            counts[category.value if category else "audit"] += 1
            agreement_rows.append(
                [
                    oid,
                    gt_c[oid].value,
                    one_c[oid].value,
                    two_c[oid].value,
                    category.value if category else "",
                    audit,
                ]
            )
        sio.write_rows(
            out_dir / "agreement.csv",
            ["object_id", "gt_change", "one_stage_change", "two_stage_change", "category", "audit"],
            agreement_rows,
        )
        summary["agreement"] = {
            **{c.value: counts.get(c.value, 0) for c in AgreementCategory},
            "three_way_disagreement": counts.get("audit", 0),
            "masked_parcels": len(mask),
        }
    sio.write_json(out_dir / "net_recovery.json", summary)
    _write_run_manifest(cfg, "change", [], time.perf_counter() - t0, {}, {})
    return summary


def _confident(label: OccupancyLabel) -> bool:
    return label in (OccupancyLabel.OCCUPIED, OccupancyLabel.NOT_OCCUPIED)


def _metric_json(comparison) -> dict:
    def br(b):
        return {"point": b.point, "ci_low": b.ci_low, "ci_high": b.ci_high}

    return {
        "one_stage": br(comparison.one_stage),
        "two_stage": br(comparison.two_stage),
        "delta": br(comparison.delta),
        "p_value": comparison.p_value,
        "dropped_fraction": comparison.dropped_fraction,
    }


def _score(gt, one, two) -> dict:
    cm_one = confusion(one, gt)
    cm_two = confusion(two, gt)
    return {
        "one_stage": metrics(cm_one).as_dict(),
        "two_stage": metrics(cm_two).as_dict(),
        "confusion": {
            "one_stage": {"tp": cm_one.tp, "fp": cm_one.fp, "fn": cm_one.fn, "tn": cm_one.tn},
            "two_stage": {"tp": cm_two.tp, "fp": cm_two.fp, "fn": cm_two.fn, "tn": cm_two.tn},
        },
    }


def cmd_evaluate(cfg: PipelineConfig) -> dict:
    """Metrics with CIs, per-visit tests, spatial statistics, GeoJSON layers."""
    t0 = time.perf_counter()
    if cfg.seed is None:
        raise InputError("evaluate requires a seed (config parameters.seed or --seed)")
    labels = _visit_labels(cfg)
    for required in (Strategy.GROUND_TRUTH, Strategy.ONE_STAGE, Strategy.TWO_STAGE):
        if required not in labels:
            raise InputError(f"evaluate needs {required.value} labels in the visit tables")
    parcels = {p.object_id: p for p in sio.read_parcels(cfg.parcels)}
    out_dir = Path(cfg.out_dir)
    warnings_out: list[str] = []
    report: dict = {"per_visit": {}, "pooled": {}, "tests": {}, "warnings": warnings_out}

    visit_masks: dict[str, list[int]] = {}
    pooled_gt: list[OccupancyLabel] = []
    pooled_one: list[OccupancyLabel] = []
    pooled_two: list[OccupancyLabel] = []
    test_rows = []
    error_rows = []
    for visit in ("V1", "V2"):
        gt_map = labels[Strategy.GROUND_TRUTH].get(visit, {})
        one_map = labels[Strategy.ONE_STAGE].get(visit, {})
        two_map = labels[Strategy.TWO_STAGE].get(visit, {})
        mask = sorted(
            oid
            for oid in set(gt_map) & set(one_map) & set(two_map)
            if _confident(gt_map[oid]) and _confident(one_map[oid]) and _confident(two_map[oid])
        )
        visit_masks[visit] = mask
        if not mask:
            warnings_out.append(f"{visit}: no scorable parcels")
            continue
        gt = [gt_map[o] for o in mask]
        one = [one_map[o] for o in mask]
        two = [two_map[o] for o in mask]
        pooled_gt += gt
        pooled_one += one
        pooled_two += two
        entry = {"masked_parcels": len(mask), **_score(gt, one, two)}
        try:
            boot = paired_bootstrap(gt, one, two, cfg.bootstrap_n, cfg.seed)
            entry["bootstrap"] = {name: _metric_json(c) for name, c in boot.items()}
        except InputError as exc:
            warnings_out.append(f"{visit}: bootstrap skipped ({exc})")
        report["per_visit"][visit] = entry

        # discordant counts: b = only one-stage wrong, c = only two-stage wrong
        b = sum(1 for g, o, t_ in zip(gt, one, two) if o != g and t_ == g)
        c = sum(1 for g, o, t_ in zip(gt, one, two) if o == g and t_ != g)
        stat, p = mcnemar(b, c)
        report["tests"][f"mcnemar_{visit.lower()}"] = {
            "b": b,
            "c": c,
            "statistic": stat,
            "p_value": p,
        }
        test_rows.append([f"McNemar ({visit})", f"{stat:.3f}", f"{p:.3f}"])
        both_c = sum(1 for g, o, t_ in zip(gt, one, two) if o == g and t_ == g)
        both_w = sum(1 for g, o, t_ in zip(gt, one, two) if o != g and t_ != g)
        error_rows.append([visit, both_c, b, c, both_w, len(mask)])
    if error_rows:
        pooled_totals = [sum(r[i] for r in error_rows) for i in range(1, 6)]
        error_rows.append(["pooled", *pooled_totals])

    pooled_entry: dict = {"masked_parcels": len(pooled_gt)}
    if pooled_gt:
        pooled_entry.update(_score(pooled_gt, pooled_one, pooled_two))
        try:
            boot = paired_bootstrap(pooled_gt, pooled_one, pooled_two, cfg.bootstrap_n, cfg.seed)
            pooled_entry["bootstrap"] = {name: _metric_json(c) for name, c in boot.items()}
            for metric_name, short in (("f1", "F1"), ("kappa", "kappa")):
                comp = boot[metric_name]
                report["tests"][f"bootstrap_delta_{metric_name}"] = {
                    "delta": comp.delta.point,
                    "ci_low": comp.delta.ci_low,
                    "ci_high": comp.delta.ci_high,
                    "p_value": comp.p_value,
                }
                test_rows.append(
                    [f"Paired Bootstrap (delta {short})", f"{comp.delta.point:+.3f}", f"{comp.p_value:.3f}"]
                )
        except InputError as exc:
            warnings_out.append(f"pooled: bootstrap skipped ({exc})")
    report["pooled"] = pooled_entry

    sio.write_rows(out_dir / "tests.csv", ["test", "statistic", "p_value"], test_rows)
    sio.write_rows(
        out_dir / "error_patterns.csv",
        ["visit", "both_correct", "one_stage_only_wrong", "two_stage_only_wrong", "both_wrong", "total"],
        error_rows,
    )

    metric_rows = []
    scopes = [("V1", report["per_visit"].get("V1")), ("V2", report["per_visit"].get("V2")),
              ("pooled", report["pooled"])]
    for scope, entry in scopes:
        if not entry or "bootstrap" not in entry:
            continue
        for name, comp in entry["bootstrap"].items():
            metric_rows.append(
                [
                    scope,
                    name,
                    repr(comp["one_stage"]["point"]),
                    repr(comp["one_stage"]["ci_low"]),
                    repr(comp["one_stage"]["ci_high"]),
                    repr(comp["two_stage"]["point"]),
                    repr(comp["two_stage"]["ci_low"]),
                    repr(comp["two_stage"]["ci_high"]),
                    repr(comp["delta"]["point"]),
                    repr(comp["p_value"]),
                ]
            )
    sio.write_rows(
        out_dir / "metrics.csv",
        [
            "scope",
            "metric",
            "one_stage",
            "one_ci_low",
            "one_ci_high",
            "two_stage",
            "two_ci_low",
            "two_ci_high",
            "delta",
            "delta_p",
        ],
        metric_rows,
    )

    # spatial layers over the common mask: confident at both visits, all sources
    gt_l = labels[Strategy.GROUND_TRUTH]
    one_l = labels[Strategy.ONE_STAGE]
    two_l = labels[Strategy.TWO_STAGE]
    common = sorted(set(visit_masks.get("V1", [])) & set(visit_masks.get("V2", [])))
    gt_changes = {o: change_class(gt_l["V1"].get(o), gt_l["V2"].get(o)) for o in common}
    one_changes = {o: change_class(one_l["V1"].get(o), one_l["V2"].get(o)) for o in common}
    two_changes = {o: change_class(two_l["V1"].get(o), two_l["V2"].get(o)) for o in common}
    accuracy_cat = {}
    geo: dict[str, list] = {"v1_status": [], "v2_status": [], "change_class": [], "accuracy": []}
    for oid in common:
        n_correct = sum(1 for v in ("V1", "V2") if two_l[v][oid] == gt_l[v][oid])
        accuracy_cat[oid] = {2: "both_correct", 1: "one_correct", 0: "both_wrong"}[n_correct]
        pt = parcels[oid].centroid
        geo["v1_status"].append(
            (
                oid,
                pt,
                {
                    "ground_truth": gt_l["V1"][oid].value,
                    "one_stage": one_l["V1"][oid].value,
                    "two_stage": two_l["V1"][oid].value,
                },
            )
        )
        geo["v2_status"].append(
            (
                oid,
                pt,
                {
                    "ground_truth": gt_l["V2"][oid].value,
                    "one_stage": one_l["V2"][oid].value,
                    "two_stage": two_l["V2"][oid].value,
                },
            )
        )
        geo["change_class"].append(
            (
                oid,
                pt,
                {
                    "ground_truth": gt_changes[oid].value,
                    "one_stage": one_changes[oid].value,
                    "two_stage": two_changes[oid].value,
                },
            )
        )
        geo["accuracy"].append((oid, pt, {"category": accuracy_cat[oid]}))
    for layer, feats in geo.items():
        sio.write_geojson_points(out_dir / f"layer_{layer}.geojson", feats)

    moran_rows = []
    weights_desc = f"knn k={cfg.k_neighbors} symmetric row-standardized"
    if len(common) > max(cfg.k_neighbors, 9):
        pts = [project_conus_albers(parcels[oid].centroid) for oid in common]
        w = knn_weights([(p.x, p.y) for p in pts], cfg.k_neighbors)
        layers = {
            "v1_occupancy": [
                1.0 if gt_l["V1"][o] is OccupancyLabel.OCCUPIED else 0.0 for o in common
            ],
            "v2_occupancy": [
                1.0 if gt_l["V2"][o] is OccupancyLabel.OCCUPIED else 0.0 for o in common
            ],
            "gt_change": [1.0 if gt_changes[o].is_change else 0.0 for o in common],
            "prediction_accuracy": [
                1.0 if accuracy_cat[o] == "both_correct" else 0.0 for o in common
            ],
        }
        for layer, values in layers.items():
            try:
                perm = morans_i(values, w, cfg.permutations, cfg.seed)
                analytic = morans_i(values, w, method=MoranMethod.ANALYTIC_RANDOMIZATION)
            except ZeroVarianceError:
                warnings_out.append(f"moran {layer}: constant field, skipped")
                continue
            for res in (perm, analytic):
                moran_rows.append(
                    [
                        layer,
                        repr(res.i),
                        repr(res.expected_i),
                        repr(res.p_value),
                        res.method.value,
                        weights_desc,
                    ]
                )
    else:
        warnings_out.append("moran skipped: not enough common parcels")
    sio.write_rows(
        out_dir / "moran.csv",
        ["layer", "moran_i", "expected_i", "p_value", "method", "weights"],
        moran_rows,
    )
    report["common_mask_parcels"] = len(common)
    sio.write_json(out_dir / "metrics.json", report)
    _write_run_manifest(cfg, "evaluate", [cfg.parcels], time.perf_counter() - t0, {}, {})
    return report


def cmd_sweep_tau(cfg: PipelineConfig, taus: Sequence[int] = (1, 2, 3, 4, 5)) -> dict:
    """One-stage precision/recall per threshold, scored against ground truth."""
    t0 = time.perf_counter()
    if not (cfg.ground_truth and Path(cfg.ground_truth).exists()):
        raise InputError("sweep-tau requires ground_truth annotations")
    gt_frames = sio.read_ground_truth_frames(cfg.ground_truth)
    rows = []
    result: dict = {}
    for visit in ("V1", "V2"):
        attr_path = cfg.visit_dir(visit) / "attributes.csv"
        if not attr_path.exists():
            continue
        attr_rows = sio.read_attributes_csv(attr_path)
        gt_by_object: dict[int, list[OccupancyLabel]] = defaultdict(list)
        for r in gt_frames:
            if r["visit"] == visit:
                gt_by_object[r["object_id"]].append(r["label"])
        gt_visit = {oid: consolidate_visit_detail(ls)[0] for oid, ls in gt_by_object.items()}
        for tau in taus:
            frame_labels: dict[int, list[OccupancyLabel]] = defaultdict(list)
            for r in attr_rows:
                label = (
                    one_stage_label(r["attrs"], tau)
                    if r["attrs"] is not None
                    else OccupancyLabel.UNCERTAIN
                )
                frame_labels[r["object_id"]].append(label)
            preds = {oid: consolidate_visit_detail(ls)[0] for oid, ls in frame_labels.items()}
            mask = sorted(
                oid
                for oid in set(preds) & set(gt_visit)
                if _confident(preds[oid]) and _confident(gt_visit[oid])
            )
            if not mask:
                continue
            m = metrics(confusion([preds[o] for o in mask], [gt_visit[o] for o in mask]))
            rows.append(
                [visit, tau, len(mask)]
                + [
                    ("" if v is None else repr(v))
                    for v in (m.precision, m.recall, m.f1, m.kappa, m.accuracy)
                ]
            )
            result[f"{visit}_tau{tau}"] = m.as_dict()
    sio.write_rows(
        Path(cfg.out_dir) / "sweep_tau.csv",
        ["visit", "tau", "masked_parcels", "precision", "recall", "f1", "kappa", "accuracy"],
        rows,
    )
    _write_run_manifest(cfg, "sweep-tau", [], time.perf_counter() - t0, {}, {})
    return result
