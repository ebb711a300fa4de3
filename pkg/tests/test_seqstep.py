import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from whiteout.seqstep import (BinaryPValueSeq, fdp_hat_path,
                              knockoff_plus_threshold,
                              rejection_count_identity, run_seqstep)


def seq_of(p_tilde):
    p = np.asarray(p_tilde, dtype=float)
    return BinaryPValueSeq(indices=np.arange(p.shape[0]), p_tilde=p)


class TestFdpHatPath:
    def test_worked_example(self):
        path = fdp_hat_path(seq_of([0.5, 0.5, 1, 0.5, 1, 1]))
        np.testing.assert_allclose(path, [1, 0.5, 1, 2 / 3, 1, 4 / 3])

    def test_leading_one_is_infinite(self):
        path = fdp_hat_path(seq_of([1, 0.5]))
        assert path[0] == np.inf and path[1] == 2.0

    def test_all_halves(self):
        path = fdp_hat_path(seq_of([0.5] * 5))
        np.testing.assert_allclose(path, 1 / np.arange(1, 6))


class TestRunSeqStep:
    def test_worked_example(self):
        res = run_seqstep(seq_of([0.5, 0.5, 1, 0.5, 1, 1]), 0.5)
        assert res.k_hat == 2
        np.testing.assert_array_equal(res.rejections, [0, 1])
        assert res.rejection_count == 2

    def test_all_ones_rejects_nothing(self):
        res = run_seqstep(seq_of([1.0] * 10), 0.2)
        assert res.k_hat == 0 and res.rejections.size == 0

    def test_all_halves_rejects_everything(self):
        res = run_seqstep(seq_of([0.5] * 100), 0.05)
        assert res.k_hat == 100 and res.rejection_count == 100

    def test_respects_custom_indices(self):
        seq = BinaryPValueSeq(indices=[7, 3, 5], p_tilde=[0.5, 0.5, 1.0])
        res = run_seqstep(seq, 0.5)
        np.testing.assert_array_equal(res.rejections, [3, 7])

    def test_invalid_alpha(self):
        with pytest.raises(ValueError):
            run_seqstep(seq_of([0.5]), 1.0)

    def test_invalid_pvalues(self):
        with pytest.raises(ValueError):
            seq_of([0.5, 0.3])

    @given(st.lists(st.sampled_from([0.5, 1.0]), min_size=1, max_size=60),
           st.integers(min_value=0, max_value=59))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_pvalues(self, ps, pos):
        # improving one p-value from 1 to 1/2 never loses rejections
        alpha = 0.25
        base = run_seqstep(seq_of(ps), alpha).rejection_count
        better = list(ps)
        better[pos % len(ps)] = 0.5
        assert run_seqstep(seq_of(better), alpha).rejection_count >= base

    def test_fdr_control_small(self):
        # global null with exchangeable signs: FDR <= alpha
        rng = np.random.default_rng(5)
        alpha, d, M = 0.2, 40, 4000
        fdp = np.empty(M)
        for m in range(M):
            p = np.where(rng.random(d) < 0.5, 0.5, 1.0)
            res = run_seqstep(seq_of(p), alpha)
            fdp[m] = 1.0 if res.rejection_count > 0 else 0.0
        mcse = fdp.std(ddof=1) / np.sqrt(M)
        assert fdp.mean() <= alpha + 3 * mcse


class TestRejectionCountIdentity:
    def test_boundaries(self):
        assert rejection_count_identity(0, 10, 0.2) == (0, False)
        count, applicable = rejection_count_identity(10, 10, 0.2)
        assert not applicable

    def test_interior_value(self):
        assert rejection_count_identity(5, 10, 0.2) == (5, True)

    @given(st.lists(st.sampled_from([0.5, 1.0]), min_size=3, max_size=80))
    @settings(max_examples=300, deadline=None)
    def test_matches_sequence_in_interior(self, ps):
        alpha = 0.3
        res = run_seqstep(seq_of(ps), alpha)
        count, applicable = rejection_count_identity(res.k_hat, len(ps), alpha)
        if applicable:
            assert count == res.rejection_count


class TestKnockoffPlusThreshold:
    def test_no_candidate(self):
        t, rej = knockoff_plus_threshold([3.0, 2.0, 1.0, -1.0], 0.34)
        assert t == np.inf and rej.size == 0

    def test_all_positive(self):
        W = np.arange(1.0, 7.0)  # d = 6 >= 1/alpha
        t, rej = knockoff_plus_threshold(W, 0.2)
        assert t == 1.0
        np.testing.assert_array_equal(rej, np.arange(6))

    def test_zero_w_never_rejected(self):
        t, rej = knockoff_plus_threshold([5.0, 4.0, 3.0, 2.0, 1.0, 0.0], 0.25)
        assert 5 not in rej

    def test_threshold_is_smallest_valid(self):
        W = np.array([4.0, 3.0, 2.0, 1.0, -0.5])
        # t = 0.5 is the smallest candidate: (1 + 1) / 4 = 0.5
        t, rej = knockoff_plus_threshold(W, 0.5)
        assert t == 0.5
        np.testing.assert_array_equal(rej, [0, 1, 2, 3])

    def test_invalid_alpha(self):
        with pytest.raises(ValueError):
            knockoff_plus_threshold([1.0], 0.0)
