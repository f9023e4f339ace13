import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streetscan import (
    ATTRIBUTE_KEYS,
    AttributeVector,
    OccupancyLabel,
    VisitLabelRecord,
    Strategy,
    consolidate_visit,
    consolidate_visit_detail,
    one_stage_label,
    risk_count,
)
from streetscan.errors import EmptyInputError

O = OccupancyLabel.OCCUPIED
N = OccupancyLabel.NOT_OCCUPIED
U = OccupancyLabel.UNCERTAIN

LISTING_2_VECTOR = AttributeVector(
    structural_damage=True, exterior_debris=True, vehicle_presence=True
)


def all_vectors():
    for bits in itertools.product([False, True], repeat=9):
        yield AttributeVector(**dict(zip(ATTRIBUTE_KEYS, bits)))


def brute_force_label(attrs: AttributeVector, tau: int = 2) -> OccupancyLabel:
    """Independent re-statement of the threshold rule for oracle checking."""
    risk_fields = [
        "house_destruction",
        "structural_damage",
        "exterior_debris",
        "open_doors_windows",
        "exterior_mud",
        "emergency_markings",
        "major_repairs",
    ]
    score = 0
    for name in risk_fields:
        if getattr(attrs, name):
            score += 1
    if attrs.site_accessible is False:
        score += 1
    if attrs.vehicle_presence:
        score -= 1
    return N if score >= tau else O


class TestRiskCount:
    def test_all_false_counts_inaccessibility(self):
        s = risk_count(AttributeVector(site_accessible=False))
        assert (s.r, s.v) == (1, 0)

    def test_all_true(self):
        s = risk_count(AttributeVector(**{k: True for k in ATTRIBUTE_KEYS}))
        assert (s.r, s.v) == (7, 1)

    def test_canonical_example_vector(self):
        s = risk_count(LISTING_2_VECTOR)
        assert (s.r, s.v) == (2, 1)


class TestOneStageRule:
    def test_two_risks_no_vehicle(self):
        attrs = AttributeVector(structural_damage=True, exterior_debris=True)
        assert risk_count(attrs).r == 2
        assert one_stage_label(attrs) is N

    def test_two_risks_with_vehicle(self):
        assert risk_count(LISTING_2_VECTOR).r == 2
        assert one_stage_label(LISTING_2_VECTOR) is O

    def test_no_risks(self):
        assert one_stage_label(AttributeVector()) is O

    def test_exhaustive_512_against_oracle(self):
        for attrs in all_vectors():
            assert one_stage_label(attrs) is brute_force_label(attrs)

    def test_never_uncertain(self):
        assert all(one_stage_label(a) is not U for a in all_vectors())

    @settings(max_examples=200, deadline=None)
    @given(
        bits=st.tuples(*[st.booleans()] * 9),
        flip=st.sampled_from([k for k in ATTRIBUTE_KEYS if k != "vehicle_presence"]),
    )
    def test_monotone_in_risk_indicators(self, bits, flip):
        attrs = AttributeVector(**dict(zip(ATTRIBUTE_KEYS, bits)))
        riskier_value = False if flip == "site_accessible" else True
        riskier = AttributeVector(**{**attrs.to_dict(), flip: riskier_value})
        if one_stage_label(attrs) is N:
            assert one_stage_label(riskier) is N

    @settings(max_examples=200, deadline=None)
    @given(bits=st.tuples(*[st.booleans()] * 9))
    def test_vehicle_never_flips_toward_not_occupied(self, bits):
        attrs = AttributeVector(**dict(zip(ATTRIBUTE_KEYS, bits)))
        with_vehicle = AttributeVector(**{**attrs.to_dict(), "vehicle_presence": True})
        if one_stage_label(attrs) is O:
            assert one_stage_label(with_vehicle) is O

    @settings(max_examples=150, deadline=None)
    @given(bits=st.tuples(*[st.booleans()] * 9), tau=st.integers(1, 5))
    def test_effective_threshold_equivalence(self, bits, tau):
        # rule with vehicle adjustment == rule at threshold tau+v ignoring v
        attrs = AttributeVector(**dict(zip(ATTRIBUTE_KEYS, bits)))
        s = risk_count(attrs)
        expected = N if s.r >= tau + s.v else O
        assert one_stage_label(attrs, tau) is expected


class TestConsolidation:
    @pytest.mark.parametrize(
        "labels,expected",
        [
            ([O, O, N], O),
            ([N, N, O], N),
            ([O, N], N),  # tie -> conservative
            ([O, U], N),  # any Uncertain frame -> conservative
            ([U, U], U),  # all Uncertain -> Uncertain
            ([O], O),
            ([N], N),
            ([U, O, O], N),
        ],
    )
    def test_rules(self, labels, expected):
        assert consolidate_visit(labels) is expected

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            consolidate_visit([])

    def test_audit_notes(self):
        assert consolidate_visit_detail([O, N])[1] == "tie"
        assert consolidate_visit_detail([O, U])[1] == "uncertain_frame_present"
        assert consolidate_visit_detail([U, U])[1] == "all_frames_uncertain"
        assert consolidate_visit_detail([O, O])[1] == ""

    @settings(max_examples=200, deadline=None)
    @given(labels=st.lists(st.sampled_from([O, N, U]), min_size=1, max_size=12), seed=st.integers(0, 999))
    def test_permutation_invariant(self, labels, seed):
        import random

        shuffled = labels[:]
        random.Random(seed).shuffle(shuffled)
        assert consolidate_visit(labels) is consolidate_visit(shuffled)

    @settings(max_examples=200, deadline=None)
    @given(labels=st.lists(st.sampled_from([O, N, U]), min_size=1, max_size=12))
    def test_uncertain_only_when_all_uncertain(self, labels):
        result = consolidate_visit(labels)
        if result is U:
            assert all(l is U for l in labels)


class TestVisitLabelRecord:
    def test_excluded_flag_mirrors_uncertain(self):
        VisitLabelRecord(1, "V1", Strategy.ONE_STAGE, U, 2, excluded=True)
        with pytest.raises(ValueError):
            VisitLabelRecord(1, "V1", Strategy.ONE_STAGE, O, 2, excluded=True)
        with pytest.raises(ValueError):
            VisitLabelRecord(1, "V1", Strategy.ONE_STAGE, U, 2, excluded=False)
