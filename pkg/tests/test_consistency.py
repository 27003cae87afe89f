"""Enumeration lab: minimizer sets, theorem checks, probes, and samplers."""

import itertools
import math

import numpy as np
import pytest

from listfold.consistency import (
    SamplerSpec,
    _listfold_exp_losses_all_perms,
    counterexample_search,
    enumerate_losses,
    frequency_zscores,
    order_sensitivity_probe,
    plank_probability,
    sample_plank_dart,
    sample_vase,
    theorem1_minimizer_family,
    vase_probability,
    verify_theorem1,
    verify_theorem2,
)
from listfold.losses import LossSpec, Transform, listfold_loss, listmle_loss

FOLD_EXP = LossSpec("listfold", Transform("exponential"))
FOLD_SGM = LossSpec("listfold", Transform("sigmoid"))
MLE_EXP = LossSpec("listmle", Transform("exponential"))


class TestEnumerate:
    def test_exp_unique_minimizer_at_truth(self):
        rep = enumerate_losses([5.0, 4.0, 1.0, 0.0], FOLD_EXP)
        assert rep.minimizers == frozenset({(5.0, 4.0, 1.0, 0.0)})
        assert rep.min_value == pytest.approx(0.65, abs=0.01)
        assert rep.classification == "descending-unique"

    def test_sigmoid_minimizer_set_is_crossed_pairing(self):
        # enumeration oracle: the sigmoid loss ties exactly on the pairings
        # (5 above 1) and (4 above 0) in either slot order
        rep = enumerate_losses([5.0, 4.0, 1.0, 0.0], FOLD_SGM)
        assert rep.minimizers == frozenset({(5.0, 4.0, 0.0, 1.0), (4.0, 5.0, 1.0, 0.0)})
        assert rep.classification == "binary-class-set"
        assert rep.minimizers == theorem1_minimizer_family([5.0, 4.0, 1.0, 0.0])

    @pytest.mark.parametrize("spec", [FOLD_EXP, FOLD_SGM, MLE_EXP, LossSpec("mse"),
                                      LossSpec("naive_pt", Transform("exponential"))])
    def test_two_items_any_family(self, spec):
        rep = enumerate_losses([1.3, -0.4], spec)
        assert (1.3, -0.4) in rep.minimizers
        assert rep.minimizers == frozenset({(1.3, -0.4)})

    def test_cap_enforced(self):
        with pytest.raises(ValueError):
            enumerate_losses(list(range(10)), FOLD_EXP)

    def test_tied_values_collapse_with_multiplicity(self):
        rep = enumerate_losses([0.5, 0.5], FOLD_EXP)
        assert rep.permutations == ((0.5, 0.5),)
        assert rep.multiplicities == (2,)
        assert rep.probability_mass() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("spec", [FOLD_EXP, MLE_EXP])
    @pytest.mark.parametrize("length", [2, 4, 6])
    def test_probability_mass_is_one(self, spec, length):
        rng = np.random.default_rng(length)
        rep = enumerate_losses(rng.uniform(-2, 2, length), spec)
        assert rep.probability_mass() == pytest.approx(1.0, abs=1e-9)


class TestTheorem1:
    def test_no_violations_small_ns(self):
        report = verify_theorem1(40, [1, 2, 3], seed=101)
        assert report.passed
        assert report.trials_run == 120

    def test_n1_family_is_descending(self):
        assert theorem1_minimizer_family([2.0, -1.0]) == frozenset({(2.0, -1.0)})

    def test_family_size_is_n_factorial(self):
        fam = theorem1_minimizer_family([6.0, 5.0, 4.0, 2.0, 1.0, 0.0])
        assert len(fam) == math.factorial(3)

    def test_tie_straddling_median_degenerate_not_violation(self):
        # force the tied draw through the public path by checking the
        # degenerate counter on a crafted generator seed is not required:
        # call the enumeration directly instead
        scores = [3.0, 1.0, 1.0, 0.0]
        rep = enumerate_losses(scores, FOLD_SGM)
        fam = theorem1_minimizer_family(scores)
        # enlarged set is allowed; the family is still contained in it
        assert fam <= rep.minimizers or fam == rep.minimizers

    def test_report_summary_reproducible(self):
        a = verify_theorem1(10, [1, 2], seed=7).summary()
        b = verify_theorem1(10, [1, 2], seed=7).summary()
        assert a == b


class TestTheorem2:
    def test_restricted_no_violations(self):
        report = verify_theorem2(40, [1, 2, 3], seed=33, restricted=True)
        assert report.passed

    def test_unrestricted_no_violations(self):
        report = verify_theorem2(40, [1, 2, 3, 4], seed=33, restricted=False)
        assert report.passed

    def test_all_equal_scores_degenerate(self):
        rep = enumerate_losses([1.0, 1.0, 1.0, 1.0], FOLD_EXP)
        assert rep.permutations == ((1.0, 1.0, 1.0, 1.0),)
        assert rep.classification != "other"

    def test_fast_evaluator_matches_reference_loss(self):
        rng = np.random.default_rng(5)
        for m in (2, 4, 6):
            f = rng.uniform(-4, 4, m)
            vals, losses = _listfold_exp_losses_all_perms(f)
            for row in rng.integers(0, len(losses), size=8):
                direct = listfold_loss(vals[row], Transform("exponential")).value
                assert direct == pytest.approx(losses[row], abs=1e-10)


class TestCounterexampleSearch:
    @pytest.mark.parametrize("dist", ["uniform", "normal", "clustered", "near-ties"])
    def test_no_witnesses_at_size_six(self, dist):
        assert counterexample_search(150, 6, dist, seed=13) == []

    def test_size_two_provably_empty(self):
        assert counterexample_search(200, 2, "uniform", seed=14) == []

    def test_injected_fake_loss_caught(self):
        # negated loss is maximized at descending: the harness must notice
        fake = lambda s: -listfold_loss(s, Transform("exponential")).value
        witnesses = counterexample_search(5, 4, "uniform", seed=15, loss_fn=fake)
        assert witnesses
        assert all(w.gap > 0 for w in witnesses)

    def test_size_validated(self):
        with pytest.raises(ValueError):
            counterexample_search(1, 7, "uniform", seed=0)
        with pytest.raises(ValueError):
            counterexample_search(1, 10, "uniform", seed=0)


class TestOrderSensitivityProbe:
    def test_worked_swap_increases_loss(self):
        records = order_sensitivity_probe([5.0, 4.0, 1.0, 0.0], FOLD_EXP)
        hit = [r for r in records
               if r.permutation == (1.0, 5.0, 4.0, 0.0) and r.swap == (0, 1)]
        assert len(hit) == 1
        assert hit[0].delta == pytest.approx(6.65 - 4.78, abs=0.01)

    def test_listmle_has_no_violations(self):
        assert order_sensitivity_probe([5.0, 4.0, 1.0, 0.0], MLE_EXP) == []

    def test_two_items_no_violations(self):
        for spec in (FOLD_EXP, FOLD_SGM, MLE_EXP):
            assert order_sensitivity_probe([1.0, 0.0], spec) == []


class TestVaseSampler:
    def test_equal_weights_uniform_over_orderings(self):
        spec = SamplerSpec("vase", np.ones(3), draws=60_000, seed=3)
        counts = sample_vase(spec)
        table = frequency_zscores(counts, spec.draws,
                                  lambda p: vase_probability(spec.weights, p))
        assert len(table) == 6
        assert all(abs(z) < 3 for _, _, z in table.values())

    def test_heavy_first_two_thirds(self):
        spec = SamplerSpec("vase", np.array([2.0, 1.0]), draws=100_000, seed=4)
        counts = sample_vase(spec)
        assert counts[(0, 1)] / spec.draws == pytest.approx(2 / 3, abs=0.01)

    def test_matches_exp_of_negative_listmle(self):
        w = np.array([1.8, 0.9, 0.5])
        spec = SamplerSpec("vase", w, draws=100_000, seed=5)
        counts = sample_vase(spec)
        f = np.log(w)

        def likelihood(perm):
            return math.exp(-listmle_loss(f[list(perm)], Transform("exponential")).value)

        table = frequency_zscores(counts, spec.draws, likelihood)
        assert all(abs(z) < 3 for _, _, z in table.values())

    def test_positive_weights_required(self):
        with pytest.raises(ValueError):
            SamplerSpec("vase", np.array([1.0, 0.0]), draws=10)


class TestPlankSampler:
    def test_two_planks_equal_weights_half(self):
        spec = SamplerSpec("plank", np.ones(2), draws=100_000, seed=6)
        counts = sample_plank_dart(spec)
        assert counts[(0, 1)] / spec.draws == pytest.approx(0.5, abs=0.01)
        assert plank_probability(np.ones(2), (0, 1)) == pytest.approx(1 / (2 * 2 - 2))

    def test_degenerate_pair_closed_form(self):
        w = np.array([math.e, 1 / math.e])
        p = plank_probability(w, (0, 1))
        assert p == pytest.approx(math.e**2 / (math.e**2 + math.e**-2), abs=1e-12)

    def test_matches_exp_of_negative_listfold(self):
        w = np.array([1.5, 1.0, 0.7, 0.4])
        spec = SamplerSpec("plank", w, draws=100_000, seed=7)
        counts = sample_plank_dart(spec)
        f = np.log(w)

        def likelihood(seq):
            return math.exp(-listfold_loss(f[list(seq)], Transform("exponential")).value)

        table = frequency_zscores(counts, spec.draws, likelihood)
        assert len(table) == 24
        assert all(abs(z) < 3 for _, _, z in table.values())

    def test_closed_form_equals_loss_likelihood(self):
        w = np.array([2.0, 1.1, 0.6, 0.3])
        f = np.log(w)
        for seq in itertools.permutations(range(4)):
            direct = plank_probability(w, seq)
            via_loss = math.exp(-listfold_loss(f[list(seq)], Transform("exponential")).value)
            assert direct == pytest.approx(via_loss, rel=1e-10)

    def test_length_constraint_validated(self):
        with pytest.raises(ValueError):
            SamplerSpec("plank", np.ones(3), draws=10)
        with pytest.raises(ValueError):
            SamplerSpec("plank", np.array([2.0, 1.0]), draws=10,
                        lengths=np.array([1.0, 1.0]))

    def test_deterministic_given_seed(self):
        spec = SamplerSpec("plank", np.array([1.4, 1.0, 0.8, 0.5]), draws=5000, seed=8)
        assert sample_plank_dart(spec) == sample_plank_dart(spec)

    def test_error_scales_with_inverse_root_draws(self):
        # quartering the draw count should double the empirical rms error
        w = np.array([1.5, 1.0, 0.7, 0.4])

        def rms_dev(draws, seed):
            counts = sample_plank_dart(SamplerSpec("plank", w, draws, seed=seed))
            table = frequency_zscores(counts, draws, lambda p: plank_probability(w, p))
            return float(np.sqrt(np.mean([(emp - p) ** 2 for emp, p, _ in table.values()])))

        ratios = [rms_dev(16_000, seed + 100) / rms_dev(64_000, seed) for seed in (1, 2, 3)]
        assert 1.4 < float(np.mean(ratios)) < 2.8
