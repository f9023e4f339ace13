"""Two-visit change classes, net recovery, and cross-source agreement."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .decision import OccupancyLabel
from .errors import ExcludedInputError

__all__ = [
    "AgreementCategory",
    "ChangeClass",
    "ChangeRecord",
    "agreement_category",
    "change_class",
    "coverage",
    "net_recovery",
]


class ChangeClass(Enum):
    RECOVERED = "Recovered"
    DETERIORATED = "Deteriorated"
    STABLE_OCCUPIED = "StableOccupied"
    STABLE_NOT_OCCUPIED = "StableNotOccupied"
    EXCLUDED = "Excluded"

    @property
    def is_change(self) -> bool:
        return self in (ChangeClass.RECOVERED, ChangeClass.DETERIORATED)


class AgreementCategory(Enum):
    """How the two strategies' change calls relate to ground truth."""

    PERFECT_NO_CHANGE = "PerfectNoChange"
    PERFECT_CHANGE = "PerfectChange"
    GT_TWO_STAGE_AGREE = "GtTwoStageAgree"
    GT_ONE_STAGE_AGREE = "GtOneStageAgree"
    METHODS_AGREE_GT_DIFFERS = "MethodsAgreeGtDiffers"


@dataclass(frozen=True)
class ChangeRecord:
    object_id: int
    v1: Optional[OccupancyLabel]
    v2: Optional[OccupancyLabel]
    change_class: ChangeClass


def change_class(
    v1: Optional[OccupancyLabel], v2: Optional[OccupancyLabel]
) -> ChangeClass:
    """Map an ordered (V1, V2) label pair to its change class.

    Any Uncertain or missing visit label excludes the parcel from change
    accounting.
    """
    confident = (OccupancyLabel.OCCUPIED, OccupancyLabel.NOT_OCCUPIED)
    if v1 not in confident or v2 not in confident:
        return ChangeClass.EXCLUDED
    if v1 is OccupancyLabel.NOT_OCCUPIED and v2 is OccupancyLabel.OCCUPIED:
        return ChangeClass.RECOVERED
    if v1 is OccupancyLabel.OCCUPIED and v2 is OccupancyLabel.NOT_OCCUPIED:
        return ChangeClass.DETERIORATED
    if v1 is OccupancyLabel.OCCUPIED:
        return ChangeClass.STABLE_OCCUPIED
    return ChangeClass.STABLE_NOT_OCCUPIED


def net_recovery(changes: Iterable[ChangeRecord]) -> int:
    """count(Recovered) - count(Deteriorated), ignoring excluded records."""
    classes = [c.change_class for c in changes]
    return classes.count(ChangeClass.RECOVERED) - classes.count(ChangeClass.DETERIORATED)


def coverage(changes: Iterable[ChangeRecord]) -> float:
    """Fraction of parcels yielding a usable (non-excluded) change."""
    classes = [c.change_class for c in changes]
    if not classes:
        return 0.0
    usable = sum(1 for c in classes if c is not ChangeClass.EXCLUDED)
    return usable / len(classes)


def agreement_category(
    gt: ChangeClass, one_stage: ChangeClass, two_stage: ChangeClass
) -> Optional[AgreementCategory]:
    """Partition one parcel's change calls against ground truth.

    'Agree' means exact change-class equality. Returns None for the
    residual three-way disagreement (no pair matches); callers report
    those in an audit column rather than forcing them into a category.
    """
    for c in (gt, one_stage, two_stage):
        if c is ChangeClass.EXCLUDED:
            raise ExcludedInputError("agreement requires non-excluded change classes")
    if gt == one_stage == two_stage:
        if gt.is_change:
            return AgreementCategory.PERFECT_CHANGE
        return AgreementCategory.PERFECT_NO_CHANGE
    if two_stage == gt:
        return AgreementCategory.GT_TWO_STAGE_AGREE
    if one_stage == gt:
        return AgreementCategory.GT_ONE_STAGE_AGREE
    if one_stage == two_stage:
        return AgreementCategory.METHODS_AGREE_GT_DIFFERS
    return None
