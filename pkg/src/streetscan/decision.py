"""Occupancy labels, the threshold decision rule, and visit consolidation.

The one-stage rule counts risk indicators and subtracts one when a
vehicle is visible: predict NotOccupied iff ``r - v >= tau``. Frame
labels are consolidated to a visit label by majority vote with a
conservative tie/uncertainty policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .attributes import AttributeVector
from .errors import EmptyInputError

__all__ = [
    "OccupancyLabel",
    "RiskSummary",
    "Strategy",
    "VisitLabelRecord",
    "consolidate_visit",
    "consolidate_visit_detail",
    "one_stage_label",
    "risk_count",
]

DEFAULT_TAU = 2


class OccupancyLabel(Enum):
    OCCUPIED = "Occupied"
    NOT_OCCUPIED = "NotOccupied"
    UNCERTAIN = "Uncertain"

    @classmethod
    def parse(cls, text: str) -> "OccupancyLabel":
        """Parse a label string; accepts 'Not Occupied' as an alias."""
        normalized = " ".join(text.split()).casefold()
        for label in cls:
            if normalized == label.value.casefold():
                return label
        if normalized == "not occupied":
            return cls.NOT_OCCUPIED
        raise ValueError(f"unrecognized occupancy label: {text!r}")


class Strategy(Enum):
    ONE_STAGE = "one_stage"
    TWO_STAGE = "two_stage"
    GROUND_TRUTH = "ground_truth"


@dataclass(frozen=True)
class RiskSummary:
    """r = risk indicators true (inaccessibility counts), v = vehicle flag."""

    r: int
    v: int


def risk_count(attrs: AttributeVector) -> RiskSummary:
    """Count the eight risk indicators and the vehicle flag.

    The risk indicators are every schema field except ``vehicle_presence``,
    with ``site_accessible`` inverted: a blocked site is a risk.
    """
    r = sum(
        (
            attrs.house_destruction,
            attrs.structural_damage,
            attrs.exterior_debris,
            attrs.open_doors_windows,
            not attrs.site_accessible,
            attrs.exterior_mud,
            attrs.emergency_markings,
            attrs.major_repairs,
        )
    )
    return RiskSummary(r=r, v=1 if attrs.vehicle_presence else 0)


def one_stage_label(attrs: AttributeVector, tau: int = DEFAULT_TAU) -> OccupancyLabel:
    """Threshold rule: NotOccupied iff ``r - v >= tau``; never Uncertain.

    Equivalently, the effective threshold is ``tau`` risk indicators with
    no vehicle visible and ``tau + 1`` with one.
    """
    s = risk_count(attrs)
    if s.r - s.v >= tau:
        return OccupancyLabel.NOT_OCCUPIED
    return OccupancyLabel.OCCUPIED


def consolidate_visit_detail(
    frame_labels: list[OccupancyLabel],
) -> tuple[OccupancyLabel, str]:
    """Consolidate frame labels into one visit label plus an audit note.

    Policy: all frames Uncertain -> Uncertain; any Uncertain frame, or an
    Occupied/NotOccupied tie, forces a conservative NotOccupied; otherwise
    the majority label wins. The audit note records which conservative
    branch fired ('' when plain majority decided).
    """
    if not frame_labels:
        raise EmptyInputError("cannot consolidate an empty frame-label list")
    n_occ = sum(1 for l in frame_labels if l is OccupancyLabel.OCCUPIED)
    n_not = sum(1 for l in frame_labels if l is OccupancyLabel.NOT_OCCUPIED)
    n_unc = len(frame_labels) - n_occ - n_not
    if n_unc == len(frame_labels):
        return OccupancyLabel.UNCERTAIN, "all_frames_uncertain"
    if n_unc > 0:
        return OccupancyLabel.NOT_OCCUPIED, "uncertain_frame_present"
    if n_occ == n_not:
        return OccupancyLabel.NOT_OCCUPIED, "tie"
    if n_occ > n_not:
        return OccupancyLabel.OCCUPIED, ""
    return OccupancyLabel.NOT_OCCUPIED, ""


def consolidate_visit(frame_labels: list[OccupancyLabel]) -> OccupancyLabel:
    """Visit-level label from per-frame labels (see consolidate_visit_detail)."""
    label, _ = consolidate_visit_detail(frame_labels)
    return label


@dataclass(frozen=True)
class VisitLabelRecord:
    """One consolidated (parcel, visit, strategy) row of the visit table."""

    object_id: int
    visit: str
    strategy: Strategy
    label: OccupancyLabel
    n_frames_used: int
    excluded: bool
    audit: str = ""

    def __post_init__(self) -> None:
        if self.excluded != (self.label is OccupancyLabel.UNCERTAIN):
            raise ValueError("excluded flag must mirror an Uncertain label")
