"""The nine-indicator facade attribute schema.

The schema is closed: a valid attribute vector has exactly these nine
boolean fields, in this canonical order, everywhere one is serialized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Any, Mapping

__all__ = ["ATTRIBUTE_KEYS", "AttributeVector"]

ATTRIBUTE_KEYS: tuple[str, ...] = (
    "house_destruction",
    "structural_damage",
    "exterior_debris",
    "open_doors_windows",
    "site_accessible",
    "exterior_mud",
    "emergency_markings",
    "major_repairs",
    "vehicle_presence",
)


@dataclass(frozen=True)
class AttributeVector:
    """One rectified frame's visual indicators.

    ``site_accessible`` is the only field whose *false* value signals risk;
    the decision rules handle the inversion.
    """

    house_destruction: bool = False
    structural_damage: bool = False
    exterior_debris: bool = False
    open_doors_windows: bool = False
    site_accessible: bool = True
    exterior_mud: bool = False
    emergency_markings: bool = False
    major_repairs: bool = False
    vehicle_presence: bool = False

    def __post_init__(self) -> None:
        for f in fields(self):
            if not isinstance(getattr(self, f.name), bool):
                raise ValueError(f"{f.name} must be a bool")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "AttributeVector":
        """Validate a parsed JSON object against the closed schema.

        Raises ``ValueError`` on missing keys, extra keys, or non-boolean
        values.
        """
        keys = set(data)
        expected = set(ATTRIBUTE_KEYS)
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise ValueError(f"schema mismatch: missing={missing} extra={extra}")
        for k in ATTRIBUTE_KEYS:
            if not isinstance(data[k], bool):
                raise ValueError(f"{k} must be a JSON boolean, got {data[k]!r}")
        return cls(**{k: data[k] for k in ATTRIBUTE_KEYS})

    def to_dict(self) -> dict[str, bool]:
        """Key-order-stable mapping (canonical order)."""
        return {k: getattr(self, k) for k in ATTRIBUTE_KEYS}

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)
