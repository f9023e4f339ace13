import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streetscan import (
    AgreementCategory,
    ChangeClass,
    ChangeRecord,
    OccupancyLabel,
    agreement_category,
    change_class,
    coverage,
    net_recovery,
)
from streetscan.errors import ExcludedInputError

O = OccupancyLabel.OCCUPIED
N = OccupancyLabel.NOT_OCCUPIED
U = OccupancyLabel.UNCERTAIN

REC = ChangeClass.RECOVERED
DET = ChangeClass.DETERIORATED
S_O = ChangeClass.STABLE_OCCUPIED
S_N = ChangeClass.STABLE_NOT_OCCUPIED
EXC = ChangeClass.EXCLUDED


def records(recovered=0, deteriorated=0, stable_occ=0, stable_not=0, excluded=0):
    out = []
    oid = 1
    for count, (v1, v2) in (
        (recovered, (N, O)),
        (deteriorated, (O, N)),
        (stable_occ, (O, O)),
        (stable_not, (N, N)),
        (excluded, (U, O)),
    ):
        for _ in range(count):
            out.append(ChangeRecord(oid, v1, v2, change_class(v1, v2)))
            oid += 1
    return out


class TestChangeClass:
    @pytest.mark.parametrize(
        "v1,v2,expected",
        [
            (N, O, REC),
            (O, N, DET),
            (O, O, S_O),
            (N, N, S_N),
            (U, O, EXC),
            (O, U, EXC),
            (None, O, EXC),
            (N, None, EXC),
            (U, U, EXC),
        ],
    )
    def test_mapping(self, v1, v2, expected):
        assert change_class(v1, v2) is expected

    @settings(max_examples=100, deadline=None)
    @given(v1=st.sampled_from([O, N]), v2=st.sampled_from([O, N]))
    def test_label_swap_symmetry(self, v1, v2):
        swap = {O: N, N: O}
        swapped = change_class(swap[v1], swap[v2])
        expected = {REC: DET, DET: REC, S_O: S_N, S_N: S_O}[change_class(v1, v2)]
        assert swapped is expected


class TestNetRecovery:
    def test_ground_truth_counts(self):
        assert net_recovery(records(recovered=20, deteriorated=6, stable_occ=100)) == 14

    def test_two_stage_counts(self):
        assert net_recovery(records(recovered=23, deteriorated=9)) == 14

    def test_one_stage_counts_overstate(self):
        assert net_recovery(records(recovered=24, deteriorated=6)) == 18

    def test_excluded_ignored_and_permutation_invariant(self):
        base = records(recovered=5, deteriorated=2, stable_not=3)
        noisy = list(reversed(base)) + records(excluded=7)
        assert net_recovery(base) == net_recovery(noisy) == 3

    def test_coverage(self):
        recs = records(recovered=3, excluded=1)
        assert coverage(recs) == pytest.approx(0.75)
        assert coverage([]) == 0.0


class TestAgreementCategory:
    def test_perfect_no_change(self):
        assert agreement_category(S_O, S_O, S_O) is AgreementCategory.PERFECT_NO_CHANGE
        assert agreement_category(S_N, S_N, S_N) is AgreementCategory.PERFECT_NO_CHANGE

    def test_perfect_change(self):
        assert agreement_category(REC, REC, REC) is AgreementCategory.PERFECT_CHANGE
        assert agreement_category(DET, DET, DET) is AgreementCategory.PERFECT_CHANGE

    def test_gt_two_stage_agree(self):
        assert agreement_category(REC, S_N, REC) is AgreementCategory.GT_TWO_STAGE_AGREE

    def test_gt_one_stage_agree(self):
        assert agreement_category(REC, REC, S_N) is AgreementCategory.GT_ONE_STAGE_AGREE

    def test_methods_agree_gt_differs(self):
        assert (
            agreement_category(S_O, REC, REC) is AgreementCategory.METHODS_AGREE_GT_DIFFERS
        )

    def test_three_way_disagreement_is_audit(self):
        assert agreement_category(REC, DET, S_O) is None

    def test_excluded_rejected(self):
        with pytest.raises(ExcludedInputError):
            agreement_category(EXC, REC, REC)

    @settings(max_examples=300, deadline=None)
    @given(
        gt=st.sampled_from([REC, DET, S_O, S_N]),
        one=st.sampled_from([REC, DET, S_O, S_N]),
        two=st.sampled_from([REC, DET, S_O, S_N]),
    )
    def test_partition_is_exhaustive_and_exclusive(self, gt, one, two):
        category = agreement_category(gt, one, two)
        if category is None:
            # residual: no two sources agree
            assert gt != one and gt != two and one != two
        elif category in (AgreementCategory.PERFECT_NO_CHANGE, AgreementCategory.PERFECT_CHANGE):
            assert gt == one == two
            assert category is (
                AgreementCategory.PERFECT_CHANGE
                if gt.is_change
                else AgreementCategory.PERFECT_NO_CHANGE
            )
        elif category is AgreementCategory.GT_TWO_STAGE_AGREE:
            assert two == gt and one != gt
        elif category is AgreementCategory.GT_ONE_STAGE_AGREE:
            assert one == gt and two != gt
        else:
            assert one == two and one != gt
