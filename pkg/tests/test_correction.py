"""Bias inversion, class blending, full repair, confusion estimation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annobias import (
    AnnotationSet,
    CorrectionParams,
    LabelDistribution,
    SimulationParams,
    TransitionMatrix,
    UncoveredClassError,
    bias_correct,
    bias_correct_distribution,
    blend_with_class_distribution,
    estimate_transition_matrix,
    kl_divergence,
    normalize,
    repair_labels,
    simulate_annotation_set,
    substream,
)
from annobias.harness.formats import (
    bundled_transition_matrix,
    bundled_transition_names,
)


class TestCorrectionParams:
    def test_defaults(self):
        p = CorrectionParams()
        assert (p.delta, p.upper_bound, p.mu) == (0.1, 0.99, 0.75)

    def test_delta_must_be_below_upper_bound(self):
        with pytest.raises(ValueError):
            CorrectionParams(delta=0.99, upper_bound=0.99)

    def test_negative_delta_rejected(self):
        with pytest.raises(ValueError):
            CorrectionParams(delta=-0.1)

    def test_upper_bound_below_one(self):
        with pytest.raises(ValueError):
            CorrectionParams(upper_bound=1.0)

    def test_mu_range(self):
        with pytest.raises(ValueError):
            CorrectionParams(mu=-0.1)
        with pytest.raises(ValueError):
            CorrectionParams(mu=1.01)


class TestBiasCorrect:
    def test_unanimous_acceptance_maps_to_certainty(self):
        a = AnnotationSet.from_counts([10, 0, 0])
        out = bias_correct(a, 0, CorrectionParams(delta=0.1))
        np.testing.assert_array_equal(out.probs, [1.0, 0.0, 0.0])

    def test_share_at_offset_maps_to_zero(self):
        # Proposal share exactly at the offset: all proposal mass is
        # attributed to blind acceptance and redistributed.
        a = AnnotationSet.from_counts([1, 9, 0])
        out = bias_correct(a, 0, CorrectionParams(delta=0.1))
        np.testing.assert_array_equal(out.probs, [0.0, 1.0, 0.0])

    def test_proposal_out_of_range(self):
        a = AnnotationSet.from_counts([1, 1])
        with pytest.raises(IndexError):
            bias_correct(a, 2, CorrectionParams())

    def test_empty_counts_rejected(self):
        a = AnnotationSet.from_counts([0, 0])
        with pytest.raises(ValueError):
            bias_correct(a, 0, CorrectionParams())

    def test_inverts_simulated_bias(self):
        # Simulate heavily, invert with the matching offset, land near the
        # original distribution.
        gt = LabelDistribution([0.6, 0.3, 0.1])
        sp = SimulationParams(delta=0.2, repetitions=100_000)
        a = simulate_annotation_set(gt, 0, sp, substream(31, "bc-invert"))
        out = bias_correct(a, 0, CorrectionParams(delta=0.2))
        assert np.abs(out.probs - gt.probs).sum() <= 0.02

    def test_proposal_mass_recovers_ground_truth(self):
        gt = LabelDistribution([0.6, 0.3, 0.1])
        sp = SimulationParams(delta=0.1, repetitions=100_000)
        a = simulate_annotation_set(gt, 0, sp, substream(32, "bc-mass"))
        out = bias_correct(a, 0, CorrectionParams(delta=0.1))
        assert abs(out[0] - 0.6) <= 0.01

    @given(
        st.lists(st.integers(min_value=0, max_value=500), min_size=2, max_size=6),
        st.integers(min_value=0, max_value=5),
        st.floats(min_value=0.0, max_value=0.5),
    )
    def test_output_is_valid_distribution(self, counts, idx, delta):
        if sum(counts) == 0:
            counts[0] = 1
        a = AnnotationSet.from_counts(counts)
        proposal = idx % a.num_classes
        out = bias_correct(a, proposal, CorrectionParams(delta=delta))
        assert out.probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(out.probs >= 0.0)

    def test_distribution_path_matches_count_path(self):
        # Correcting the normalized tally must agree with correcting counts.
        a = AnnotationSet.from_counts([30, 15, 5])
        p = CorrectionParams(delta=0.1)
        from_counts = bias_correct(a, 0, p)
        from_dist = bias_correct_distribution(
            LabelDistribution(a.counts / a.total), 0, p
        )
        np.testing.assert_allclose(from_counts.probs, from_dist.probs, atol=1e-12)

    def test_distribution_path_handles_full_proposal_mass(self):
        d = LabelDistribution([1.0, 0.0, 0.0])
        out = bias_correct_distribution(d, 0, CorrectionParams(delta=0.1))
        np.testing.assert_array_equal(out.probs, [1.0, 0.0, 0.0])


class TestBlend:
    def test_full_weight_on_distribution_is_identity(self):
        d = LabelDistribution([0.6, 0.3, 0.1])
        t = TransitionMatrix.identity(3)
        out = blend_with_class_distribution(d, t, 1.0)
        np.testing.assert_array_equal(out.probs, d.probs)

    def test_zero_weight_returns_confusion_row(self):
        d = LabelDistribution([0.6, 0.3, 0.1])
        t = bundled_transition_matrix("micebone").matrix
        out = blend_with_class_distribution(d, t, 0.0)
        np.testing.assert_allclose(out.probs, t.row(0), atol=1e-12)

    def test_micebone_worked_blend(self):
        d = LabelDistribution([0.6, 0.3, 0.1])
        t = bundled_transition_matrix("micebone").matrix
        out = blend_with_class_distribution(d, t, 0.75)
        np.testing.assert_allclose(
            out.probs, [0.63175, 0.270, 0.09825], atol=1e-9
        )

    def test_mu_out_of_range_rejected(self):
        d = LabelDistribution([0.5, 0.5])
        with pytest.raises(ValueError):
            blend_with_class_distribution(d, TransitionMatrix.identity(2), 1.2)

    def test_class_count_mismatch_rejected(self):
        d = LabelDistribution([0.5, 0.5])
        with pytest.raises(ValueError):
            blend_with_class_distribution(d, TransitionMatrix.identity(3), 0.5)

    @settings(max_examples=60)
    @given(
        st.sampled_from(sorted(bundled_transition_names())),
        st.data(),
        st.floats(min_value=0.0, max_value=1.0),
    )
    def test_blending_preserves_top_class(self, name, data, mu):
        # Every bundled confusion row has a strictly dominant diagonal, so
        # mixing can never move the argmax.
        t = bundled_transition_matrix(name).matrix
        weights = data.draw(
            st.lists(
                st.floats(min_value=0.01, max_value=1.0),
                min_size=t.num_classes,
                max_size=t.num_classes,
            )
        )
        d = normalize(np.asarray(weights))
        out = blend_with_class_distribution(d, t, mu)
        assert int(np.argmax(out.probs)) == int(np.argmax(d.probs))


class TestRepairLabels:
    T_ID = TransitionMatrix.identity(3)

    def test_neutral_params_reproduce_normalized_counts(self):
        # With mu=1 and an inversion whose offset is 0 and cap is ~1, both
        # stages collapse to (near) identity.
        a = AnnotationSet.from_counts([6, 3, 1])
        p = CorrectionParams(delta=0.0, upper_bound=1.0 - 1e-9, mu=1.0)
        out = repair_labels(a, 0, self.T_ID, p)
        np.testing.assert_allclose(out.probs, [0.6, 0.3, 0.1], atol=1e-8)

    def test_corrected_point_mass_survives_identity_blend(self):
        a = AnnotationSet.from_counts([1, 9, 0])
        p = CorrectionParams(delta=0.1, mu=0.75)
        out = repair_labels(a, 0, self.T_ID, p)
        np.testing.assert_array_equal(out.probs, [0.0, 1.0, 0.0])

    def test_full_mu_equals_bias_correct(self):
        a = AnnotationSet.from_counts([12, 5, 3])
        p = CorrectionParams(delta=0.1, mu=1.0)
        np.testing.assert_array_equal(
            repair_labels(a, 0, self.T_ID, p).probs,
            bias_correct(a, 0, CorrectionParams(delta=0.1)).probs,
        )

    def test_both_stages_off_is_plain_tally(self):
        a = AnnotationSet.from_counts([3, 1, 0])
        out = repair_labels(
            a, 0, self.T_ID, CorrectionParams(), use_bc=False, use_cb=False
        )
        np.testing.assert_array_equal(out.probs, [0.75, 0.25, 0.0])

    def test_blend_on_raw_counts_then_invert(self):
        # cb_input="biased" blends the raw tally and inverts afterwards.
        a = AnnotationSet.from_counts([20, 20, 10])
        t = bundled_transition_matrix("micebone").matrix
        p = CorrectionParams(delta=0.1, mu=0.75)
        got = repair_labels(a, 0, t, p, cb_input="biased")
        manual = bias_correct_distribution(
            blend_with_class_distribution(
                LabelDistribution(a.counts / a.total), t, 0.75
            ),
            0,
            p,
        )
        np.testing.assert_array_equal(got.probs, manual.probs)

    def test_unknown_cb_input_rejected(self):
        a = AnnotationSet.from_counts([1, 1])
        with pytest.raises(ValueError, match="cb_input"):
            repair_labels(
                a, 0, TransitionMatrix.identity(2), CorrectionParams(),
                cb_input="sideways",
            )

    def test_repair_beats_raw_counts_on_simulated_bias(self):
        # Thin simulated tallies, inversion at the true offset, blending
        # toward the true class-conditional rows: the repaired distribution
        # must land closer to the ground truth than the raw tally in at
        # least 90% of 1000 trials.
        gt = LabelDistribution([0.5, 0.4, 0.1])
        sp = SimulationParams(delta=0.1, repetitions=50)
        cp = CorrectionParams(delta=0.1, mu=0.5)
        t = TransitionMatrix(np.tile(gt.probs, (3, 1)))
        wins = 0
        for trial in range(1000):
            rng = substream(42, "repair-trial", trial)
            a = simulate_annotation_set(gt, 0, sp, rng)
            raw = LabelDistribution(a.counts / a.total)
            repaired = repair_labels(a, 0, t, cp)
            if kl_divergence(gt, repaired) < kl_divergence(gt, raw):
                wins += 1
        assert wins >= 900


class TestEstimateTransitionMatrix:
    def test_one_hot_population_yields_identity(self):
        gts = [
            LabelDistribution(np.eye(3)[k]) for k in range(3) for _ in range(34)
        ]
        t = estimate_transition_matrix(gts, rng=substream(51, "est-onehot"))
        np.testing.assert_array_equal(t.rows, np.eye(3))

    def test_single_prototype_dominant_row(self):
        # All images share one soft label; the row of its top class stays
        # within 0.05 of it.  (Rows of rarely-attained classes are
        # conditioned on an atypical draw and land elsewhere by design.)
        r = LabelDistribution([0.7, 0.3])
        t = estimate_transition_matrix([r] * 300, rng=substream(0, "est-single"))
        assert np.max(np.abs(t.rows[0] - r.probs)) <= 0.05
        assert np.argmax(t.rows[1]) == 1

    def test_multi_prototype_recovery(self):
        protos = np.array(
            [
                [0.70, 0.20, 0.10],
                [0.15, 0.70, 0.15],
                [0.10, 0.25, 0.65],
            ]
        )
        pop = [LabelDistribution(p) for p in protos for _ in range(100)]
        t = estimate_transition_matrix(pop, rng=substream(2, "est-multi"))
        assert np.max(np.abs(t.rows - protos)) <= 0.1
        np.testing.assert_array_equal(np.argmax(t.rows, axis=1), [0, 1, 2])

    def test_uncovered_class_raises(self):
        gts = [LabelDistribution([1.0, 0.0, 0.0])] * 200
        with pytest.raises(UncoveredClassError, match="uncovered class"):
            estimate_transition_matrix(gts, rng=substream(3, "est-uncovered"))

    def test_small_pool_samples_with_replacement(self):
        gts = [LabelDistribution([1.0, 0.0]), LabelDistribution([0.0, 1.0])]
        t = estimate_transition_matrix(
            gts, n_images=50, n_annos=5, rng=substream(4, "est-replacement")
        )
        np.testing.assert_array_equal(t.rows, np.eye(2))

    def test_deterministic_given_stream(self):
        r = LabelDistribution([0.6, 0.4])
        a = estimate_transition_matrix([r] * 200, rng=substream(5, "est-det"))
        b = estimate_transition_matrix([r] * 200, rng=substream(5, "est-det"))
        np.testing.assert_array_equal(a.rows, b.rows)

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError):
            estimate_transition_matrix([], rng=substream(6, "est-empty"))

    def test_mismatched_class_counts_rejected(self):
        gts = [LabelDistribution([0.5, 0.5]), LabelDistribution([0.4, 0.3, 0.3])]
        with pytest.raises(ValueError):
            estimate_transition_matrix(gts, rng=substream(7, "est-mismatch"))
