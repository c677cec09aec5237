import math

import numpy as np
import pytest

from conftest import CL3, SD4, make_dataset
from fedva.data import UNLABELED
from fedva.ensemble import (
    Classification,
    EnsembleConfig,
    GlobalPosterior,
    LambdaPrior,
    PhiTensor,
    adjust_csmf,
    build_phi,
    classify,
    fit_global,
    marginal_loglik,
    run_variant,
    split_rhat,
)
from fedva.errors import (
    CountOverflow,
    DimensionMismatch,
    IncompletePhi,
    IncompleteRegistry,
    InsufficientLocalLabels,
    InvalidHyper,
    InvalidLabels,
    NotASimplex,
)
from fedva.exchange import make_registry
from fedva.lcm import GibbsConfig, LcmHyper, train_lcm


def phi_of(log_phi, present=None):
    log_phi = np.asarray(log_phi, dtype=np.float64)
    n, C, M = log_phi.shape
    if present is None:
        present = np.ones((C, M), dtype=np.int8)
    return PhiTensor(log_phi=log_phi, present=present,
                     death_ids=tuple(f"d{i}" for i in range(n)))


def bernoulli_phi(n_yes, n_no, p_yes=(0.9, 0.1)):
    """C=2, M=1 tensor for a single Yes/No symptom."""
    rows = [[[math.log(p_yes[0])], [math.log(p_yes[1])]]] * n_yes
    rows += [[[math.log(1 - p_yes[0])], [math.log(1 - p_yes[1])]]] * n_no
    return phi_of(rows)


FAST = EnsembleConfig(variant="plain", chains=2, iterations=400, burn_in=200, seed=0)


def test_adjust_csmf_examples():
    out = adjust_csmf(np.array([0.5, 0.5]), 100, np.array([10, 10]))
    assert np.allclose(out, [0.5, 0.5], atol=1e-15)
    same = adjust_csmf(np.array([0.3, 0.7]), 50, np.array([0, 0]))
    assert np.allclose(same, [0.3, 0.7], atol=1e-15)
    out2 = adjust_csmf(np.array([1.0, 0.0]), 100, np.array([0, 20]))
    assert np.allclose(out2, [0.8, 0.2], atol=1e-15)
    assert out2.sum() == pytest.approx(1.0, abs=1e-12)


def test_adjust_csmf_guards():
    with pytest.raises(CountOverflow):
        adjust_csmf(np.array([0.5, 0.5]), 10, np.array([6, 6]))
    with pytest.raises(NotASimplex):
        adjust_csmf(np.array([0.5, 0.6]), 10, np.array([1, 1]))
    with pytest.raises(DimensionMismatch):
        adjust_csmf(np.array([0.5, 0.5]), 10, np.array([1, 1, 1]))


def test_marginal_loglik_matches_direct_sum():
    log_phi = np.log(np.array([
        [[0.9, 0.4], [0.2, 0.1]],
        [[0.3, 0.6], [0.8, 0.5]],
        [[0.5, 0.5], [0.5, 0.5]],
    ]))
    phi = phi_of(log_phi)
    pi = np.array([0.3, 0.7])
    lam = np.array([[0.6, 0.4], [0.2, 0.8]])
    want = 0.0
    for i in (1, 2):  # unlabeled part (one label below)
        want += math.log(sum(
            math.exp(log_phi[i, c, m]) * pi[c] * lam[c, m]
            for c in range(2) for m in range(2)
        ))
    pi_tilde = np.array([0.5, 0.5])
    want += math.log(sum(math.exp(log_phi[0, 1, m]) * lam[1, m] for m in range(2))
                     * pi_tilde[1])
    got = marginal_loglik(phi, pi, lam, labels=np.array([1]), pi_tilde=pi_tilde)
    assert got == pytest.approx(want, abs=1e-12)


def test_phi_tensor_validation():
    with pytest.raises(IncompletePhi):
        present = np.array([[1], [0]], dtype=np.int8)
        phi_of(np.log([[[0.5], [0.5]]]), present)  # finite where absent
    with pytest.raises(DimensionMismatch):
        PhiTensor(log_phi=np.zeros((2, 2)), present=np.ones((2, 1), dtype=np.int8),
                  death_ids=("a", "b"))
    with pytest.raises(DimensionMismatch):
        PhiTensor(log_phi=np.zeros((2, 2, 1)), present=np.ones((2, 2), dtype=np.int8),
                  death_ids=("a", "b"))
    with pytest.raises(IncompletePhi):
        phi_of(np.full((1, 2, 1), 0.5))  # positive log-likelihood


def test_single_model_lambda_degenerates():
    phi = bernoulli_phi(7, 3)
    post = fit_global(phi, None, FAST)
    assert np.all(post.lambda_draws == 1.0)
    assert post.lambda_draws.shape == (post.D, 2, 1)


def test_prior_recovery_with_no_data():
    phi = phi_of(np.zeros((0, 3, 1)))
    cfg = EnsembleConfig(variant="plain", chains=4, iterations=2000, burn_in=500, seed=1)
    post = fit_global(phi, None, cfg)
    se = np.sqrt((1 / 3) * (2 / 3) / 4) / np.sqrt(post.D)
    assert np.abs(post.pi_mean() - 1 / 3).max() < 3 * se


def test_bernoulli_mixture_matches_grid_oracle():
    phi = bernoulli_phi(70, 30)
    cfg = EnsembleConfig(variant="plain", chains=4, iterations=2000, burn_in=1000, seed=2)
    post = fit_global(phi, None, cfg)
    grid = np.linspace(1e-6, 1 - 1e-6, 2001)
    loglik = 70 * np.log(grid * 0.9 + (1 - grid) * 0.1) + 30 * np.log(
        grid * 0.1 + (1 - grid) * 0.9
    )
    w = np.exp(loglik - loglik.max())
    oracle = float((w * grid).sum() / w.sum())
    assert 0.70 <= post.pi_mean()[0] <= 0.80
    assert post.pi_mean()[0] == pytest.approx(oracle, abs=0.02)


def test_fit_global_is_deterministic_and_worker_invariant():
    phi = bernoulli_phi(12, 8)
    p1 = fit_global(phi, None, FAST, workers=1)
    p2 = fit_global(phi, None, FAST, workers=2)
    assert np.array_equal(p1.pi_draws, p2.pi_draws)
    assert np.array_equal(p1.lambda_draws, p2.lambda_draws)
    assert np.array_equal(p1.log_post, p2.log_post)
    p3 = fit_global(phi, None, EnsembleConfig(variant="plain", chains=2,
                                              iterations=400, burn_in=200, seed=3))
    assert not np.array_equal(p1.pi_draws, p3.pi_draws)


def test_labels_shift_posterior_and_pi_tilde_reporting():
    phi = bernoulli_phi(10, 10)
    labels = np.zeros(6, dtype=np.int64)  # first 6 deaths known cause 0
    tied = fit_global(phi, labels, EnsembleConfig(variant="partial", tie_pi=True,
                                                  chains=2, iterations=400,
                                                  burn_in=200, seed=0))
    untied = fit_global(phi, labels, EnsembleConfig(variant="partial", tie_pi=False,
                                                    chains=2, iterations=400,
                                                    burn_in=200, seed=0))
    assert tied.pi_tilde_draws is None
    assert untied.pi_tilde_draws is not None
    assert untied.pi_tilde_draws.shape == untied.pi_draws.shape
    plain = fit_global(phi, None, FAST)
    assert tied.pi_mean()[0] > plain.pi_mean()[0] - 0.02


def test_fit_global_label_guards():
    phi = bernoulli_phi(5, 5)
    with pytest.raises(InvalidLabels):
        fit_global(phi, np.array([2]), FAST)  # cause index out of range
    with pytest.raises(InvalidLabels):
        fit_global(phi, np.array([-1]), FAST)
    with pytest.raises(InvalidLabels):
        fit_global(phi, np.zeros(11, dtype=np.int64), FAST)  # more labels than deaths
    with pytest.raises(IncompletePhi):
        present = np.array([[1], [0]], dtype=np.int8)
        log_phi = np.full((2, 2, 1), -np.inf)
        log_phi[:, 0, 0] = -1.0
        fit_global(PhiTensor(log_phi=log_phi, present=present, death_ids=("a", "b")),
                   None, FAST)  # a cause no domain covers


def test_logistic_normal_route_runs_and_reports_acceptance():
    rng = np.random.default_rng(0)
    phi = phi_of(np.log(rng.uniform(0.05, 1.0, size=(40, 2, 2))))
    cfg = EnsembleConfig(variant="plain", chains=2, iterations=600, burn_in=300,
                         seed=0, lambda_prior=LambdaPrior(kind="logistic_normal", sigma=1.0))
    post = fit_global(phi, None, cfg)
    assert post.acceptance_rate is not None
    assert 0.0 < post.acceptance_rate < 1.0
    assert np.allclose(post.lambda_draws.sum(axis=2), 1.0, atol=1e-9)


def test_classify_examples():
    log_phi = np.array([[[math.log(0.9)], [math.log(0.1)]],
                        [[math.log(0.2)], [math.log(0.2)]]])
    phi = phi_of(log_phi)
    post = GlobalPosterior(
        pi_draws=np.array([[0.5, 0.5], [0.25, 0.75]]),
        pi_tilde_draws=None,
        lambda_draws=np.ones((2, 2, 1)),
        log_post=np.zeros(2),
        acceptance_rate=None,
        config=FAST,
        domain_ids=("only",),
        rhat_pi=np.array([1.0, 1.0]),
    )
    cls = classify(phi, post)
    # death 0, first draw: (0.9, 0.1); second draw: 0.25*0.9 vs 0.75*0.1 -> 0.75, 0.25
    assert cls.probs[0, 0] == pytest.approx((0.9 + 0.75) / 2, abs=1e-12)
    # death 1: likelihood cancels, probs = mean pi
    assert cls.probs[1].tolist() == pytest.approx([0.375, 0.625], abs=1e-12)
    assert np.allclose(cls.probs.sum(axis=1), 1.0, atol=1e-12)
    assert cls.top[1] == 1


def test_classify_tie_breaks_to_lowest_index():
    phi = phi_of(np.zeros((1, 3, 1)))
    post = GlobalPosterior(
        pi_draws=np.full((1, 3), 1 / 3),
        pi_tilde_draws=None,
        lambda_draws=np.ones((1, 3, 1)),
        log_post=np.zeros(1),
        acceptance_rate=None,
        config=FAST,
        domain_ids=("only",),
        rhat_pi=np.ones(3),
    )
    assert classify(phi, post).top[0] == 0


def test_split_rhat_behavior():
    rng = np.random.default_rng(0)
    same = rng.normal(size=(1, 400, 2))
    chains = np.concatenate([same, same], axis=0)
    r = split_rhat(chains)
    assert np.all(np.isfinite(r)) and np.all(np.abs(r - 1.0) < 0.05)
    assert np.all(np.isnan(split_rhat(np.zeros((2, 3, 1)))))
    shifted = np.concatenate([same, same + 5.0], axis=0)
    assert np.all(split_rhat(shifted) > 1.5)


def federation(seed=0, n_per=120):
    rng = np.random.default_rng(seed)
    theta = np.array([
        [0.9, 0.8, 0.1, 0.2],
        [0.1, 0.2, 0.8, 0.7],
        [0.5, 0.1, 0.1, 0.9],
    ])
    summaries = []
    for name in ("alpha", "beta"):
        y = np.repeat([0, 1, 2], n_per // 3).astype(np.int32)
        x = (rng.random((len(y), 4)) < theta[y]).astype(np.uint8)
        ds = make_dataset(name, x, y)
        summaries.append(train_lcm(ds, LcmHyper(K=2),
                                   GibbsConfig(iterations=200, burn_in=100, thin=1, seed=seed)))
    y_t = np.repeat([0, 1, 2], 20).astype(np.int32)
    x_t = (rng.random((60, 4)) < theta[y_t]).astype(np.uint8)
    target = make_dataset("target", x_t, y_t)
    return make_registry(summaries, CL3, SD4), target


def test_build_phi_requires_coverage():
    reg, target = federation()
    thin = make_registry([s for s in reg.summaries][:1], CL3, SD4)
    phi = build_phi(thin, target)
    assert phi.log_phi.shape == (60, 3, 1)
    rng = np.random.default_rng(1)
    y = np.repeat([0, 1], 10).astype(np.int32)  # cause 2 never trained
    ds = make_dataset("partial_dom", rng.integers(0, 2, (20, 4)).astype(np.uint8), y)
    s = train_lcm(ds, LcmHyper(K=1), GibbsConfig(iterations=40, burn_in=20, thin=1, seed=0))
    reg2 = make_registry([s], CL3, SD4)
    with pytest.raises(IncompleteRegistry) as ei:
        build_phi(reg2, target)
    assert "trauma" in str(ei.value) or "2" in str(ei.value)


def test_run_variant_plain_equals_fit_global():
    reg, target = federation()
    cfg = EnsembleConfig(variant="plain", chains=2, iterations=300, burn_in=150, seed=5)
    post, cls, csmf = run_variant(reg, target, cfg)
    direct = fit_global(build_phi(reg, target), None, cfg, domain_ids=reg.domain_ids)
    assert np.array_equal(post.pi_draws, direct.pi_draws)
    assert cls.death_ids == target.death_ids
    assert np.allclose(csmf, post.pi_mean())  # nothing held out


def test_run_variant_partial_uses_labels_in_original_order():
    reg, target = federation()
    y = target.y.copy()
    y[::2] = UNLABELED  # label every other death
    mixed = make_dataset("target", target.x, y, ids=target.death_ids)
    cfg = EnsembleConfig(variant="partial", chains=2, iterations=300, burn_in=150, seed=5)
    post, cls, csmf = run_variant(reg, mixed, cfg)
    assert cls.death_ids == mixed.death_ids
    lab = np.flatnonzero(mixed.y != UNLABELED)
    assert np.allclose(cls.probs[lab, mixed.y[lab]], 1.0)
    assert np.allclose(cls.probs.sum(axis=1), 1.0)


def test_run_variant_domain_adds_model_and_holds_out():
    reg, target = federation()
    cfg = EnsembleConfig(variant="domain", chains=2, iterations=300, burn_in=150, seed=5)
    post, cls, csmf = run_variant(
        reg, target, cfg,
        local_hyper=LcmHyper(K=1),
        local_cfg=GibbsConfig(iterations=60, burn_in=30, thin=1, seed=0),
    )
    assert post.lambda_draws.shape[2] == reg.M + 1
    assert post.domain_ids[-1] == "target-local"
    assert cls.death_ids == target.death_ids
    assert np.allclose(cls.probs[target.labeled_mask, target.y[target.labeled_mask]], 1.0)
    assert abs(csmf.sum() - 1.0) < 1e-9


def test_run_variant_mix_split_is_seeded_partition():
    reg, target = federation()
    cfg = EnsembleConfig(variant="mix", chains=2, iterations=300, burn_in=150,
                         seed=5, mix_split_fraction=0.5)
    post1, _, _ = run_variant(reg, target, cfg, local_hyper=LcmHyper(K=1),
                              local_cfg=GibbsConfig(iterations=60, burn_in=30, thin=1, seed=0))
    post2, _, _ = run_variant(reg, target, cfg, local_hyper=LcmHyper(K=1),
                              local_cfg=GibbsConfig(iterations=60, burn_in=30, thin=1, seed=0))
    assert np.array_equal(post1.pi_draws, post2.pi_draws)
    assert post1.lambda_draws.shape[2] == reg.M + 1


def test_run_variant_guards_small_label_sets():
    reg, target = federation()
    few = target.subset(np.arange(5))  # 5 < 2 * C
    cfg = EnsembleConfig(variant="domain", chains=2, iterations=100, burn_in=50, seed=0)
    with pytest.raises(InsufficientLocalLabels):
        run_variant(reg, few, cfg, local_hyper=LcmHyper(K=1))
    with pytest.raises(InvalidHyper):
        EnsembleConfig(variant="nope").validate()
