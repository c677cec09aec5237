"""Confusion-matrix calibration baseline for CSMF estimation.

Each base model acts as a black-box classifier of target deaths. Local
labels estimate per-model confusion matrices (rows: distribution of the
model's predicted cause given the true cause), which then reweigh the
predictions on unlabeled deaths into a calibrated CSMF.

This is a hard-classification variant: only each model's top predicted
cause enters, which makes every confusion row conjugate. Confusion rows get
Dir(gamma (I + eps 1)) priors whose concentration gamma ~ Gamma(alpha,
beta_rate) controls shrinkage toward the identity matrix: large gamma means
"trust the classifier as-is". Confusion rows are estimated from labeled
deaths only; latent causes of unlabeled deaths never feed back into them.

The baseline estimates prevalence only. It cannot assign causes to
individual deaths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DimensionMismatch, EmptyPredictions, InvalidHyper, InvalidLabels
from .exchange import FederationRegistry
from .ensemble import EnsembleConfig, PhiTensor, classify, fit_global
from .lcm import cond_loglik_matrix
from .utils import derive_rng, gumbel_argmax, log_dirichlet


@dataclass(frozen=True)
class PredictionTensor:
    """a[i,c,m] = p_m(Y_i=c | x_i); each (i,m) slice sums to 1."""

    a: np.ndarray
    death_ids: tuple[str, ...]

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 3:
            raise DimensionMismatch("prediction tensor must be n x C x M")
        if len(self.death_ids) != a.shape[0]:
            raise DimensionMismatch("death_ids length disagrees with the tensor")
        if a.shape[0] and (
            np.any(a < 0) or np.any(np.abs(a.sum(axis=1) - 1.0) > 1e-8)
        ):
            raise DimensionMismatch("each per-model prediction row must be a simplex")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "death_ids", tuple(self.death_ids))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def C(self) -> int:
        return self.a.shape[1]

    @property
    def M(self) -> int:
        return self.a.shape[2]

    def top(self) -> np.ndarray:
        """(n, M) top predicted cause per model, lowest index on ties."""
        return np.argmax(self.a, axis=1)


@dataclass(frozen=True)
class CalibConfig:
    alpha: float = 5.0
    beta_rate: float = 0.5
    epsilon: float = 0.01
    iterations: int = 2000
    burn_in: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if not (self.alpha > 0 and self.beta_rate > 0 and self.epsilon > 0):
            raise InvalidHyper("alpha, beta_rate and epsilon must all be positive")
        if not isinstance(self.iterations, int) or self.iterations < 1:
            raise InvalidHyper("iterations must be a positive integer")
        if not isinstance(self.burn_in, int) or not 0 <= self.burn_in < self.iterations:
            raise InvalidHyper("burn_in must satisfy 0 <= burn_in < iterations")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidHyper("seed must be an unsigned 64-bit integer")


def gamma_prior_mean(cfg: CalibConfig) -> float:
    """Prior mean of the shrinkage concentration (rate parameterization)."""
    return cfg.alpha / cfg.beta_rate


@dataclass(frozen=True)
class CalibrationResult:
    pi_draws: np.ndarray
    confusion_mean: np.ndarray
    gamma_mean: np.ndarray
    config: CalibConfig
    domain_ids: tuple[str, ...]

    def pi_mean(self) -> np.ndarray:
        return self.pi_draws.mean(axis=0)

    def pi_interval(self, level: float = 0.95) -> np.ndarray:
        lo = (1.0 - level) / 2.0
        return np.quantile(self.pi_draws, [lo, 1.0 - lo], axis=0)


def build_predictions(reg: FederationRegistry, target: Dataset,
                      cfg: EnsembleConfig) -> PredictionTensor:
    """Classify every target death with each base model independently.

    Every model runs through the same single-model pipeline, restricted to
    the causes it covers; causes it does not cover get probability 0. Target
    labels are not consumed here; they belong to the calibration step.
    """
    C = len(target.cause_list)
    if target.n == 0:
        return PredictionTensor(a=np.zeros((0, C, reg.M)), death_ids=())
    a = np.zeros((target.n, C, reg.M))
    for m, s in enumerate(reg.summaries):
        covered = np.flatnonzero(s.present)
        log_phi = cond_loglik_matrix(s, target.x)[:, covered]
        phi = PhiTensor(
            log_phi=log_phi[:, :, None],
            present=np.ones((covered.shape[0], 1), dtype=np.uint8),
            death_ids=target.death_ids,
        )
        sub_cfg = EnsembleConfig(
            variant="plain",
            tie_pi=cfg.tie_pi,
            lambda_prior=cfg.lambda_prior,
            pi_prior_conc=cfg.pi_prior_conc,
            chains=cfg.chains,
            iterations=cfg.iterations,
            burn_in=cfg.burn_in,
            thin=cfg.thin,
            seed=cfg.seed,
            mix_split_fraction=cfg.mix_split_fraction,
            mh_step=cfg.mh_step,
        )
        post = fit_global(phi, None, sub_cfg, domain_ids=(s.domain_id,))
        a[:, covered, m] = classify(phi, post).probs
    return PredictionTensor(a=a, death_ids=target.death_ids)


def _log_gamma_pdf(g: float, shape: float, rate: float) -> float:
    return (shape - 1.0) * np.log(g) - rate * g


def _log_dir_pdf_unnorm(logx: np.ndarray, alpha: np.ndarray) -> float:
    from scipy.special import gammaln

    return float(((alpha - 1.0) * logx).sum() + gammaln(alpha.sum()) - gammaln(alpha).sum())


def fit_calibration(a: PredictionTensor, labels: np.ndarray | None,
                    cfg: CalibConfig,
                    domain_ids: tuple[str, ...] = ()) -> CalibrationResult:
    """Gibbs sampler for the calibrated CSMF.

    The first len(labels) deaths are labeled; their (true cause, predicted
    cause) pairs are the only evidence the confusion matrices see. Unlabeled
    deaths carry latent true causes that inform pi alone.
    """
    cfg.validate()
    if a.n == 0:
        raise EmptyPredictions("no predictions to calibrate")
    n, C, M = a.n, a.C, a.M
    n_L = 0 if labels is None else len(labels)
    if n_L > n:
        raise InvalidLabels("more labels than deaths")
    y_lab = None
    if n_L:
        y_lab = np.asarray(labels, dtype=np.int64)
        if y_lab.min() < 0 or y_lab.max() >= C:
            raise InvalidLabels("label index out of range")

    top = a.top()
    # Two independent streams so the confusion side of the model is a pure
    # function of the labeled data: unlabeled deaths can never perturb it,
    # not even through shared draw order.
    rng = derive_rng("calibration", cfg.seed)
    rng_cut = derive_rng("calibration-cut", cfg.seed)

    # Labeled confusion counts are fixed for the whole run (no feedback).
    counts = np.zeros((M, C, C))
    if n_L:
        for m in range(M):
            np.add.at(counts[m], (y_lab, top[:n_L, m]), 1.0)

    eye_eps = np.eye(C) + cfg.epsilon  # row c of the prior is gamma * eye_eps[c]
    gamma = np.full((M, C), cfg.alpha / cfg.beta_rate)
    log_conf = np.empty((M, C, C))
    conf = np.empty((M, C, C))
    for m in range(M):
        for c in range(C):
            conf[m, c], log_conf[m, c] = log_dirichlet(
                rng_cut, gamma[m, c] * eye_eps[c] + counts[m, c]
            )

    top_u = top[n_L:]
    n_u = n - n_L
    keep = cfg.iterations - cfg.burn_in
    pi_out = np.empty((keep, C))
    conf_sum = np.zeros((M, C, C))
    gamma_sum = np.zeros((M, C))
    pi, log_pi = log_dirichlet(rng, np.ones(C))
    kept = 0

    for it in range(cfg.iterations):
        # gamma | confusion rows: random-walk Metropolis on log gamma
        for m in range(M):
            for c in range(C):
                g = gamma[m, c]
                g_new = float(np.exp(np.log(g) + 0.3 * rng_cut.normal()))
                cur = (
                    _log_gamma_pdf(g, cfg.alpha, cfg.beta_rate)
                    + _log_dir_pdf_unnorm(log_conf[m, c], g * eye_eps[c] + counts[m, c])
                    + np.log(g)  # Jacobian of the log-scale walk
                )
                new = (
                    _log_gamma_pdf(g_new, cfg.alpha, cfg.beta_rate)
                    + _log_dir_pdf_unnorm(log_conf[m, c], g_new * eye_eps[c] + counts[m, c])
                    + np.log(g_new)
                )
                if np.log(rng_cut.random()) < new - cur:
                    gamma[m, c] = g_new

        # confusion rows | gamma (labeled counts only)
        for m in range(M):
            for c in range(C):
                conf[m, c], log_conf[m, c] = log_dirichlet(
                    rng_cut, gamma[m, c] * eye_eps[c] + counts[m, c]
                )

        # latent true causes of unlabeled deaths | confusion, pi:
        # weight of cause c is log pi_c + sum_m log conf[m, c, top_u[i, m]]
        if n_u:
            logw = log_pi[None, :].repeat(n_u, axis=0)
            for m in range(M):
                logw = logw + log_conf[m][:, top_u[:, m]].T
            t_u = gumbel_argmax(rng, logw, axis=1)
            latent_counts = np.bincount(t_u, minlength=C).astype(np.float64)
        else:
            latent_counts = np.zeros(C)

        pi, log_pi = log_dirichlet(rng, 1.0 + latent_counts)

        if it >= cfg.burn_in:
            pi_out[kept] = pi
            conf_sum += conf
            gamma_sum += gamma
            kept += 1

    return CalibrationResult(
        pi_draws=pi_out,
        confusion_mean=conf_sum / keep,
        gamma_mean=gamma_sum / keep,
        config=cfg,
        domain_ids=tuple(domain_ids),
    )
