"""Single-domain latent class base model, trained by Gibbs sampling.

Within each cause c, symptom vectors follow a K-component mixture of
independent Bernoulli profiles: Z | Y=c ~ Cat(nu_c) and
X_j | Y=c, Z=k ~ Bern(theta_ckj). Mixture weights get a truncated
stick-breaking prior, profiles get Beta priors (optionally spike-and-slab
with a per-cause shared base rate). Training is fully supervised: every
record must carry a cause label.

Only posterior means of (nu, theta) plus cause presence flags leave this
module; the training-domain cause distribution pi_m is sampled as part of
the chain but never exported.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .data import UNLABELED, Dataset, SymptomValue, cause_counts
from .errors import (
    AbsentCause,
    DimensionMismatch,
    EmptyDataset,
    InvalidHyper,
    InvalidSummary,
    NotFullyLabeled,
    TooManySymptoms,
)
from .utils import derive_rng, gumbel_argmax

from . import TOOL_VERSION

# Beta draws are clipped into the open interval so log/log1p stay finite.
_THETA_EPS = 1e-12


@dataclass(frozen=True)
class LcmHyper:
    """Priors for one domain's latent class model."""

    K: int = 5
    alpha_sb: float = 1.0
    theta_prior: tuple[float, float] = (1.0, 1.0)
    pi_prior: float = 1.0
    sparse: bool = False
    spike_omega_prior: tuple[float, float] = (1.0, 1.0)

    def validate(self) -> None:
        if not isinstance(self.K, int) or self.K < 1:
            raise InvalidHyper(f"K must be a positive integer, got {self.K!r}")
        if not self.alpha_sb > 0:
            raise InvalidHyper(f"alpha_sb must be positive, got {self.alpha_sb!r}")
        a, b = self.theta_prior
        if not (a > 0 and b > 0):
            raise InvalidHyper(f"theta_prior shapes must be positive, got {self.theta_prior!r}")
        if not self.pi_prior > 0:
            raise InvalidHyper(f"pi_prior must be positive, got {self.pi_prior!r}")
        oa, ob = self.spike_omega_prior
        if not (oa > 0 and ob > 0):
            raise InvalidHyper(
                f"spike_omega_prior shapes must be positive, got {self.spike_omega_prior!r}"
            )


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0

    def validate(self) -> None:
        if not isinstance(self.iterations, int) or self.iterations < 1:
            raise InvalidHyper(f"iterations must be a positive integer, got {self.iterations!r}")
        if not isinstance(self.burn_in, int) or not 0 <= self.burn_in < self.iterations:
            raise InvalidHyper("burn_in must satisfy 0 <= burn_in < iterations")
        if not isinstance(self.thin, int) or self.thin < 1:
            raise InvalidHyper(f"thin must be a positive integer, got {self.thin!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidHyper(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass
class LcmState:
    """Mutable sampler state. z is aligned with the canonical record order."""

    pi_m: np.ndarray
    nu: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    delta: np.ndarray | None = None
    mu: np.ndarray | None = None
    omega: np.ndarray | None = None


@dataclass(frozen=True)
class Provenance:
    tool_version: str
    seed: int
    iterations: int
    burn_in: int


@dataclass(frozen=True)
class BaseModelSummary:
    """Posterior-mean conditional likelihood of one domain, per cause.

    Rows for absent causes (present[c] = 0) hold NaN and must never be read;
    cond_loglik refuses them.
    """

    domain_id: str
    nu_bar: np.ndarray
    theta_bar: np.ndarray
    present: np.ndarray
    n_by_cause: np.ndarray
    cause_list_fingerprint: str
    dict_fingerprint: str
    hyper: LcmHyper
    provenance: Provenance

    def __post_init__(self):
        nu_bar = np.asarray(self.nu_bar, dtype=np.float64)
        theta_bar = np.asarray(self.theta_bar, dtype=np.float64)
        present = np.asarray(self.present, dtype=np.uint8)
        n_by_cause = np.asarray(self.n_by_cause, dtype=np.int64)
        for arr in (nu_bar, theta_bar, present, n_by_cause):
            arr.setflags(write=False)
        object.__setattr__(self, "nu_bar", nu_bar)
        object.__setattr__(self, "theta_bar", theta_bar)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "n_by_cause", n_by_cause)

    @property
    def C(self) -> int:
        return self.nu_bar.shape[0]

    @property
    def K(self) -> int:
        return self.nu_bar.shape[1]

    @property
    def p(self) -> int:
        return self.theta_bar.shape[2]

    def validate(self) -> None:
        """Re-check every numeric invariant; raises InvalidSummary."""
        C, K = self.nu_bar.shape
        if self.theta_bar.shape != (C, K, self.theta_bar.shape[2]):
            raise InvalidSummary("theta_bar shape inconsistent with nu_bar")
        if self.present.shape != (C,) or self.n_by_cause.shape != (C,):
            raise InvalidSummary("present / n_by_cause must be length-C vectors")
        if not np.all((self.present == 0) | (self.present == 1)):
            raise InvalidSummary("present flags must be 0 or 1")
        if np.any(self.n_by_cause < 0):
            raise InvalidSummary("n_by_cause must be nonnegative")
        if not np.any(self.present):
            raise InvalidSummary("summary has no present cause")
        for c in range(C):
            if self.present[c]:
                if self.n_by_cause[c] < 1:
                    raise InvalidSummary(f"cause {c} flagged present with zero training deaths")
                nu_c = self.nu_bar[c]
                if not np.all(np.isfinite(nu_c)) or np.any(nu_c < 0):
                    raise InvalidSummary(f"nu_bar[{c}] is not a valid weight vector")
                if abs(float(nu_c.sum()) - 1.0) > 1e-6:
                    raise InvalidSummary(f"nu_bar[{c}] does not sum to 1 within 1e-6")
                th_c = self.theta_bar[c]
                if not np.all(np.isfinite(th_c)) or np.any(th_c <= 0) or np.any(th_c >= 1):
                    raise InvalidSummary(f"theta_bar[{c}] has entries outside (0,1)")
        self.hyper.validate()


def _canonical_order(dataset: Dataset) -> np.ndarray:
    """Indices sorting records by death_id; fixes the sampling order."""
    return np.argsort(np.asarray(dataset.death_ids, dtype=object), kind="stable")


def _stick_breaking(rng: np.random.Generator, counts: np.ndarray, alpha_sb: float) -> np.ndarray:
    """One draw of mixture weights from the truncated stick conditionals."""
    K = counts.shape[0]
    if K == 1:
        return np.ones(1)
    tail = counts[::-1].cumsum()[::-1] - counts  # tail[k] = sum_{l>k} counts[l]
    v = np.empty(K)
    v[: K - 1] = rng.beta(1.0 + counts[: K - 1], alpha_sb + tail[: K - 1])
    v[K - 1] = 1.0  # truncation: last stick takes the remainder
    nu = np.empty(K)
    rest = 1.0
    for k in range(K):
        nu[k] = v[k] * rest
        rest *= 1.0 - v[k]
    return nu


def train_lcm(labeled: Dataset, hyper: LcmHyper, cfg: GibbsConfig,
              min_count: int = 1) -> BaseModelSummary:
    """Gibbs-sample the per-cause latent class posteriors and export means.

    Records are sorted by death_id before sampling, so input order cannot
    change the output. present[c] = 1 iff the domain holds at least
    min_count deaths of cause c; parameters of absent causes are NaN.
    """
    hyper.validate()
    cfg.validate()
    if min_count < 1:
        raise InvalidHyper(f"min_count must be >= 1, got {min_count!r}")
    if labeled.n == 0:
        raise EmptyDataset(f"domain {labeled.domain_id!r} has no records")
    if np.any(labeled.y == UNLABELED):
        raise NotFullyLabeled(f"domain {labeled.domain_id!r} has unlabeled records")

    order = _canonical_order(labeled)
    x = labeled.x[order]
    y = labeled.y[order]
    C = len(labeled.cause_list)
    K, p, n = hyper.K, labeled.p, labeled.n
    a_th, b_th = hyper.theta_prior
    n_by_cause = cause_counts(labeled)
    trained = [c for c in range(C) if n_by_cause[c] > 0]

    rng = derive_rng("lcm-train", labeled.domain_id, cfg.seed)

    # Per-cause observation indicators; Missing cells sit in neither matrix.
    rows = {c: np.flatnonzero(y == c) for c in trained}
    yes = {c: (x[rows[c]] == SymptomValue.YES).astype(np.float64) for c in trained}
    no = {c: (x[rows[c]] == SymptomValue.NO).astype(np.float64) for c in trained}

    state = LcmState(
        pi_m=np.full(C, 1.0 / C),
        nu=np.full((C, K), np.nan),
        theta=np.full((C, K, p), np.nan),
        z=np.zeros(n, dtype=np.int64),
    )
    if hyper.sparse:
        state.delta = np.zeros((C, K, p), dtype=np.int8)
        state.mu = np.full((C, p), np.nan)
        state.omega = np.full(C, np.nan)
    slab = {c: np.full((K, p), 0.5) for c in trained} if hyper.sparse else None
    for c in trained:
        state.z[rows[c]] = rng.integers(0, K, size=rows[c].shape[0])
        if hyper.sparse:
            state.mu[c] = 0.5
            state.omega[c] = 0.5

    sum_nu = np.zeros((C, K))
    sum_theta = np.zeros((C, K, p))
    kept = 0

    oa, ob = hyper.spike_omega_prior
    for it in range(cfg.iterations):
        for c in trained:
            z_c = state.z[rows[c]]
            n_c = rows[c].shape[0]
            zoh = np.zeros((n_c, K))
            zoh[np.arange(n_c), z_c] = 1.0
            counts_k = zoh.sum(axis=0)
            yes_k = zoh.T @ yes[c]  # (K, p) observed-Yes counts per class
            no_k = zoh.T @ no[c]

            state.nu[c] = _stick_breaking(rng, counts_k, hyper.alpha_sb)

            if hyper.sparse:
                th_slab = slab[c]
                mu_c = state.mu[c]
                om = state.omega[c]
                logit = (
                    np.log(om) - np.log1p(-om)
                    + yes_k * (np.log(th_slab) - np.log(mu_c))
                    + no_k * (np.log1p(-th_slab) - np.log1p(-mu_c))
                )
                delta = (rng.random((K, p)) < expit(logit)).astype(np.int8)
                state.delta[c] = delta
                th_slab = rng.beta(a_th + delta * yes_k, b_th + delta * no_k)
                slab[c] = np.clip(th_slab, _THETA_EPS, 1.0 - _THETA_EPS)
                off = 1.0 - delta
                mu_c = rng.beta(
                    a_th + (off * yes_k).sum(axis=0), b_th + (off * no_k).sum(axis=0)
                )
                state.mu[c] = np.clip(mu_c, _THETA_EPS, 1.0 - _THETA_EPS)
                d_sum = float(delta.sum())
                om = rng.beta(oa + d_sum, ob + K * p - d_sum)
                state.omega[c] = min(max(om, _THETA_EPS), 1.0 - _THETA_EPS)
                theta_c = delta * slab[c] + off * state.mu[c][None, :]
            else:
                theta_c = rng.beta(a_th + yes_k, b_th + no_k)
            state.theta[c] = np.clip(theta_c, _THETA_EPS, 1.0 - _THETA_EPS)

            with np.errstate(divide="ignore"):
                logw = (
                    yes[c] @ np.log(state.theta[c]).T
                    + no[c] @ np.log1p(-state.theta[c]).T
                    + np.log(state.nu[c])
                )
            state.z[rows[c]] = gumbel_argmax(rng, logw)

        state.pi_m = rng.dirichlet(hyper.pi_prior + n_by_cause.astype(np.float64))

        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            for c in trained:
                sum_nu[c] += state.nu[c]
                sum_theta[c] += state.theta[c]
            kept += 1

    nu_bar = np.full((C, K), np.nan)
    theta_bar = np.full((C, K, p), np.nan)
    present = np.zeros(C, dtype=np.uint8)
    for c in trained:
        if n_by_cause[c] < min_count:
            continue
        present[c] = 1
        nu_c = sum_nu[c] / kept
        nu_bar[c] = nu_c / nu_c.sum()
        theta_bar[c] = np.clip(sum_theta[c] / kept, _THETA_EPS, 1.0 - _THETA_EPS)

    summary = BaseModelSummary(
        domain_id=labeled.domain_id,
        nu_bar=nu_bar,
        theta_bar=theta_bar,
        present=present,
        n_by_cause=n_by_cause,
        cause_list_fingerprint=labeled.cause_list.fingerprint,
        dict_fingerprint=labeled.symptom_dict.fingerprint,
        hyper=hyper,
        provenance=Provenance(
            tool_version=TOOL_VERSION,
            seed=cfg.seed,
            iterations=cfg.iterations,
            burn_in=cfg.burn_in,
        ),
    )
    summary.validate()
    return summary


def cond_loglik(s: BaseModelSummary, x: np.ndarray, c: int) -> float:
    """log p(x | Y=c) under the exported posterior means.

    Missing cells contribute nothing; a fully Missing vector scores log 1 = 0.
    """
    x = np.asarray(x)
    if x.shape != (s.p,):
        raise DimensionMismatch(f"expected symptom vector of length {s.p}, got shape {x.shape}")
    if not 0 <= c < s.C or not s.present[c]:
        raise AbsentCause(f"cause {c} is not covered by domain {s.domain_id!r}")
    yes = x == SymptomValue.YES
    no = x == SymptomValue.NO
    if not yes.any() and not no.any():
        return 0.0
    th = s.theta_bar[c]
    log_terms = np.log(th[:, yes]).sum(axis=1) + np.log1p(-th[:, no]).sum(axis=1)
    with np.errstate(divide="ignore"):  # nu components may be exactly 0
        log_nu = np.log(s.nu_bar[c])
    return float(logsumexp(log_terms + log_nu))


def cond_loglik_matrix(s: BaseModelSummary, x: np.ndarray) -> np.ndarray:
    """Batch form: (n, C) of log p(x_i | Y=c), -inf at absent causes."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != s.p:
        raise DimensionMismatch(f"expected (n, {s.p}) symptom matrix, got shape {x.shape}")
    n = x.shape[0]
    yes = (x == SymptomValue.YES).astype(np.float64)
    no = (x == SymptomValue.NO).astype(np.float64)
    all_missing = ~(yes.any(axis=1) | no.any(axis=1))
    out = np.full((n, s.C), -np.inf)
    for c in range(s.C):
        if not s.present[c]:
            continue
        th = s.theta_bar[c]
        with np.errstate(divide="ignore"):  # nu components may be exactly 0
            log_nu = np.log(s.nu_bar[c])
        logw = yes @ np.log(th).T + no @ np.log1p(-th).T + log_nu
        out[:, c] = logsumexp(logw, axis=1)
        out[all_missing, c] = 0.0
    return out


def enumerate_mass(s: BaseModelSummary, c: int, chunk: int = 1 << 14) -> float:
    """Sum exp(cond_loglik) over all 2^p fully observed vectors (test oracle)."""
    if s.p > 20:
        raise TooManySymptoms(f"enumeration over 2^{s.p} vectors refused (p must be <= 20)")
    if not 0 <= c < s.C or not s.present[c]:
        raise AbsentCause(f"cause {c} is not covered by domain {s.domain_id!r}")
    p = s.p
    total = 0.0
    codes = np.arange(2**p, dtype=np.int64)
    for start in range(0, codes.shape[0], chunk):
        block = codes[start : start + chunk]
        bits = ((block[:, None] >> np.arange(p)) & 1).astype(np.uint8)
        total += float(np.exp(cond_loglik_matrix(s, bits)[:, c]).sum())
    return total
