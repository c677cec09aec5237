"""Global ensemble over federated base models.

Given M exported conditional likelihoods and a target dataset, estimate the
target cause distribution pi and cause-specific domain weights lambda from

    p(pi, lambda | X) propto p(pi) p(lambda) prod_i sum_c sum_m
        phi[i,c,m] * pi_c * lambda_cm

by data-augmented Gibbs sampling: each death gets a latent (cause, domain)
pair, then pi and lambda have Dirichlet conditionals. Deaths with known
labels contribute through a separate cause distribution pi_tilde (or the
same pi when the labeled subset is a random sample, tie_pi).

lambda rows live on the subset of domains that cover the cause; weights of
non-covering domains are exactly zero. The default lambda prior is a
symmetric Dirichlet (fully conjugate); a logistic-normal prior over row
log-weights is available via random-walk Metropolis-within-Gibbs.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .data import Dataset
from .errors import (
    CountOverflow,
    DimensionMismatch,
    FingerprintMismatch,
    IncompletePhi,
    IncompleteRegistry,
    InsufficientLocalLabels,
    InvalidHyper,
    InvalidLabels,
    NotASimplex,
)
from .exchange import FederationRegistry
from .lcm import GibbsConfig, LcmHyper, cond_loglik_matrix, train_lcm
from .utils import derive_rng, derive_seed, gumbel_argmax, log_dirichlet, round_half_up

VARIANTS = ("plain", "partial", "domain", "mix")


@dataclass(frozen=True)
class PhiTensor:
    """log_phi[i,c,m] = log p_m(x_i | Y=c); -inf exactly where (c,m) absent."""

    log_phi: np.ndarray
    present: np.ndarray
    death_ids: tuple[str, ...]

    def __post_init__(self):
        log_phi = np.asarray(self.log_phi, dtype=np.float64)
        present = np.asarray(self.present, dtype=np.uint8)
        if log_phi.ndim != 3:
            raise DimensionMismatch("log_phi must have shape (n, C, M)")
        n, C, M = log_phi.shape
        if present.shape != (C, M):
            raise DimensionMismatch("present flags must be C x M")
        if len(self.death_ids) != n:
            raise DimensionMismatch("death_ids length disagrees with log_phi")
        if np.any(log_phi[:, present == 1] == -np.inf) or np.any(
            log_phi[:, present == 0] != -np.inf
        ):
            raise IncompletePhi("-inf cells must coincide exactly with absent (c,m)")
        if np.any(log_phi[:, present == 1] > 0):
            raise IncompletePhi("log-likelihood entries must be <= 0")
        log_phi.setflags(write=False)
        present.setflags(write=False)
        object.__setattr__(self, "log_phi", log_phi)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "death_ids", tuple(self.death_ids))

    @property
    def n(self) -> int:
        return self.log_phi.shape[0]

    @property
    def C(self) -> int:
        return self.log_phi.shape[1]

    @property
    def M(self) -> int:
        return self.log_phi.shape[2]


@dataclass(frozen=True)
class LambdaPrior:
    """Domain-weight prior: symmetric dirichlet(conc) or logistic_normal(sigma)."""

    kind: str = "dirichlet"
    conc: float = 1.0
    sigma: float = 1.0

    def validate(self) -> None:
        if self.kind not in ("dirichlet", "logistic_normal"):
            raise InvalidHyper(f"unknown lambda prior kind {self.kind!r}")
        if self.kind == "dirichlet" and not self.conc > 0:
            raise InvalidHyper(f"dirichlet concentration must be positive, got {self.conc!r}")
        if self.kind == "logistic_normal" and not self.sigma > 0:
            raise InvalidHyper(f"logistic-normal sigma must be positive, got {self.sigma!r}")


@dataclass(frozen=True)
class EnsembleConfig:
    variant: str = "plain"
    tie_pi: bool = True
    lambda_prior: LambdaPrior = LambdaPrior()
    pi_prior_conc: float = 1.0
    chains: int = 4
    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    mix_split_fraction: float = 0.5
    mh_step: float = 0.25

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise InvalidHyper(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        self.lambda_prior.validate()
        if not self.pi_prior_conc > 0:
            raise InvalidHyper("pi_prior_conc must be positive")
        if not isinstance(self.chains, int) or self.chains < 1:
            raise InvalidHyper("chains must be a positive integer")
        if not isinstance(self.iterations, int) or self.iterations < 1:
            raise InvalidHyper("iterations must be a positive integer")
        if not isinstance(self.burn_in, int) or not 0 <= self.burn_in < self.iterations:
            raise InvalidHyper("burn_in must satisfy 0 <= burn_in < iterations")
        if not isinstance(self.thin, int) or self.thin < 1:
            raise InvalidHyper("thin must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidHyper("seed must be an unsigned 64-bit integer")
        if not 0.0 < self.mix_split_fraction < 1.0:
            raise InvalidHyper("mix_split_fraction must lie in (0,1)")
        if not self.mh_step > 0:
            raise InvalidHyper("mh_step must be positive")


@dataclass(frozen=True)
class GlobalPosterior:
    """Pooled post-burn-in draws, in (chain, iteration) order."""

    pi_draws: np.ndarray
    pi_tilde_draws: np.ndarray | None
    lambda_draws: np.ndarray
    log_post: np.ndarray
    acceptance_rate: float | None
    config: EnsembleConfig
    domain_ids: tuple[str, ...]
    rhat_pi: np.ndarray

    @property
    def D(self) -> int:
        return self.pi_draws.shape[0]

    def pi_mean(self) -> np.ndarray:
        return self.pi_draws.mean(axis=0)

    def lambda_mean(self) -> np.ndarray:
        return self.lambda_draws.mean(axis=0)


@dataclass(frozen=True)
class Classification:
    probs: np.ndarray
    top: np.ndarray
    death_ids: tuple[str, ...]


def build_phi(reg: FederationRegistry, target: Dataset) -> PhiTensor:
    """Evaluate every summary's conditional log-likelihood on every death."""
    if target.symptom_dict.fingerprint != reg.dict_fingerprint:
        raise FingerprintMismatch("target symptom dictionary differs from the registry's")
    if target.cause_list.fingerprint != reg.cause_list_fingerprint:
        raise FingerprintMismatch("target cause list differs from the registry's")
    if not reg.complete:
        uncovered = np.flatnonzero(reg.coverage == 0).tolist()
        raise IncompleteRegistry(f"no summary covers cause indices {uncovered}")
    log_phi = np.stack([cond_loglik_matrix(s, target.x) for s in reg.summaries], axis=2)
    present = np.stack([s.present for s in reg.summaries], axis=1)
    return PhiTensor(log_phi=log_phi, present=present, death_ids=target.death_ids)


def marginal_loglik(phi: PhiTensor, pi: np.ndarray, lam: np.ndarray,
                    labels: np.ndarray | None = None,
                    pi_tilde: np.ndarray | None = None) -> float:
    """Exact log-likelihood of the mixture, latent assignments summed out.

    The first len(labels) deaths are treated as labeled and scored through
    pi_tilde (defaults to pi); the rest are scored through pi.
    """
    pi = np.asarray(pi, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if pi.shape != (phi.C,) or lam.shape != (phi.C, phi.M):
        raise DimensionMismatch("pi / lambda shapes disagree with phi")
    n_L = 0 if labels is None else len(labels)
    if n_L > phi.n:
        raise DimensionMismatch("more labels than deaths")
    if pi_tilde is None:
        pi_tilde = pi
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        log_pi_tilde = np.log(pi_tilde)
        log_lam = np.log(lam)
    total = 0.0
    if n_L < phi.n:
        w = phi.log_phi[n_L:] + log_pi[None, :, None] + log_lam[None, :, :]
        total += float(logsumexp(w.reshape(phi.n - n_L, -1), axis=1).sum())
    if n_L:
        y = np.asarray(labels, dtype=np.int64)
        rows = np.arange(n_L)
        w = phi.log_phi[rows, y, :] + log_lam[y, :]
        total += float((logsumexp(w, axis=1) + log_pi_tilde[y]).sum())
    return total


def _log_dirichlet_pdf(x: np.ndarray, alpha: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    return float(
        ((alpha - 1.0) * logx).sum() + gammaln(alpha.sum()) - gammaln(alpha).sum()
    )


def _sample_lambda_row(rng, counts_m: np.ndarray, allowed: np.ndarray, conc: float):
    """Dirichlet conditional on the allowed domains; zeros elsewhere."""
    M = allowed.shape[0]
    lam = np.zeros(M)
    log_lam = np.full(M, -np.inf)
    idx = np.flatnonzero(allowed)
    vals, logs = log_dirichlet(rng, conc + counts_m[idx])
    lam[idx] = vals
    log_lam[idx] = logs
    return lam, log_lam


def _run_chain(phi: PhiTensor, labels: np.ndarray | None, cfg: EnsembleConfig, chain: int):
    """One MCMC chain; returns kept draws and acceptance bookkeeping."""
    n, C, M = phi.n, phi.C, phi.M
    n_L = 0 if labels is None else len(labels)
    y_lab = None if labels is None else np.asarray(labels, dtype=np.int64)
    allowed = phi.present.astype(bool)
    conc = cfg.lambda_prior.conc
    ln_prior = cfg.lambda_prior.kind == "logistic_normal"
    sigma = cfg.lambda_prior.sigma
    rng = derive_rng("ensemble-chain", cfg.seed, chain)

    log_phi_u = phi.log_phi[n_L:]
    n_u = n - n_L
    counts_lab = (
        np.bincount(y_lab, minlength=C).astype(np.float64) if n_L else np.zeros(C)
    )
    lab_rows = np.arange(n_L)

    pi, log_pi = log_dirichlet(rng, np.full(C, cfg.pi_prior_conc))
    if cfg.tie_pi or n_L == 0:
        pi_tilde, log_pi_tilde = pi, log_pi
    else:
        pi_tilde, log_pi_tilde = log_dirichlet(rng, np.full(C, cfg.pi_prior_conc))

    lam = np.zeros((C, M))
    log_lam = np.full((C, M), -np.inf)
    beta = np.zeros((C, M))
    if ln_prior:
        for c in range(C):
            idx = np.flatnonzero(allowed[c])
            beta[c, idx] = rng.normal(0.0, sigma, size=idx.shape[0])
            log_lam[c, idx] = beta[c, idx] - logsumexp(beta[c, idx])
            lam[c, idx] = np.exp(log_lam[c, idx])
    else:
        for c in range(C):
            lam[c], log_lam[c] = _sample_lambda_row(rng, np.zeros(M), allowed[c], conc)

    step = np.full(C, cfg.mh_step)
    accept_win = np.zeros(C)
    window = 0
    accept_post = np.zeros(C)
    post_updates = 0
    multi = allowed.sum(axis=1) > 1  # causes with a real weight choice

    keep = (cfg.iterations - cfg.burn_in + cfg.thin - 1) // cfg.thin
    pi_out = np.empty((keep, C))
    pi_tilde_out = np.empty((keep, C)) if (n_L and not cfg.tie_pi) else None
    lam_out = np.empty((keep, C, M))
    logpost_out = np.empty(keep)
    kept = 0

    for it in range(cfg.iterations):
        # (Y, H) | pi, lambda — joint draw via cause marginal then domain
        if n_u:
            with np.errstate(invalid="ignore"):
                by_cause = logsumexp(log_phi_u + log_lam[None, :, :], axis=2)
            y_u = gumbel_argmax(rng, by_cause + log_pi[None, :], axis=1)
            h_u = gumbel_argmax(
                rng, log_phi_u[np.arange(n_u), y_u, :] + log_lam[y_u, :], axis=1
            )
            counts_u = np.bincount(y_u, minlength=C).astype(np.float64)
            nm = np.bincount(y_u * M + h_u, minlength=C * M).astype(np.float64)
        else:
            counts_u = np.zeros(C)
            nm = np.zeros(C * M)
        if n_L:
            h_l = gumbel_argmax(
                rng, phi.log_phi[lab_rows, y_lab, :] + log_lam[y_lab, :], axis=1
            )
            nm += np.bincount(y_lab * M + h_l, minlength=C * M)
        nm = nm.reshape(C, M)

        # pi | Y (and pi_tilde when the labeled subset has its own CSMF)
        if cfg.tie_pi:
            pi, log_pi = log_dirichlet(rng, cfg.pi_prior_conc + counts_u + counts_lab)
            pi_tilde, log_pi_tilde = pi, log_pi
        else:
            pi, log_pi = log_dirichlet(rng, cfg.pi_prior_conc + counts_u)
            if n_L:
                pi_tilde, log_pi_tilde = log_dirichlet(rng, cfg.pi_prior_conc + counts_lab)

        # lambda | H
        if ln_prior:
            adapting = it < cfg.burn_in
            for c in range(C):
                if not multi[c]:
                    idx = np.flatnonzero(allowed[c])
                    lam[c, idx], log_lam[c, idx] = 1.0, 0.0
                    continue
                idx = np.flatnonzero(allowed[c])
                b = beta[c, idx]
                prop = b + step[c] * rng.normal(size=idx.shape[0])
                cur_ll = b - logsumexp(b)
                prop_ll = prop - logsumexp(prop)
                delta = (
                    float(nm[c, idx] @ (prop_ll - cur_ll))
                    + (b @ b - prop @ prop) / (2.0 * sigma**2)
                )
                if np.log(rng.random()) < delta:
                    beta[c, idx] = prop
                    cur_ll = prop_ll
                    accept_win[c] += 1
                    if not adapting:
                        accept_post[c] += 1
                log_lam[c, idx] = cur_ll
                lam[c, idx] = np.exp(cur_ll)
            window += 1
            if adapting and window == 50:
                rate = accept_win / 50.0
                step[rate < 0.20] *= 0.8
                step[rate > 0.40] *= 1.25
                accept_win[:] = 0.0
                window = 0
            elif not adapting and window == 1:
                post_updates += 1
                window = 0
        else:
            for c in range(C):
                lam[c], log_lam[c] = _sample_lambda_row(rng, nm[c], allowed[c], conc)

        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            pi_out[kept] = pi
            if pi_tilde_out is not None:
                pi_tilde_out[kept] = pi_tilde
            lam_out[kept] = lam
            lp = marginal_loglik(
                phi, pi, lam, labels=y_lab,
                pi_tilde=None if cfg.tie_pi else pi_tilde,
            )
            lp += _log_dirichlet_pdf(pi, np.full(C, cfg.pi_prior_conc))
            if n_L and not cfg.tie_pi:
                lp += _log_dirichlet_pdf(pi_tilde, np.full(C, cfg.pi_prior_conc))
            for c in range(C):
                idx = np.flatnonzero(allowed[c])
                if ln_prior:
                    b = beta[c, idx]
                    lp += float(
                        -0.5 * (b @ b) / sigma**2
                        - idx.shape[0] * (0.5 * np.log(2 * np.pi) + np.log(sigma))
                    )
                elif idx.shape[0] > 1:
                    lp += _log_dirichlet_pdf(lam[c, idx], np.full(idx.shape[0], conc))
            logpost_out[kept] = lp
            kept += 1

    acc = None
    if ln_prior:
        denom = max(post_updates, 1)
        rates = accept_post[multi] / denom
        acc = float(rates.mean()) if rates.size else 1.0
    return pi_out, pi_tilde_out, lam_out, logpost_out, acc


def _chain_task(args):
    return _run_chain(*args)


def split_rhat(chain_draws: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction per coordinate.

    chain_draws: (chains, T, C). Returns a length-C vector; NaN when T < 4.
    """
    chains, T, C = chain_draws.shape
    if T < 4:
        return np.full(C, np.nan)
    half = T // 2
    seqs = np.concatenate(
        [chain_draws[:, :half, :], chain_draws[:, half : 2 * half, :]], axis=0
    )
    m, L = seqs.shape[0], half
    means = seqs.mean(axis=1)
    w = seqs.var(axis=1, ddof=1).mean(axis=0)
    b = L * means.var(axis=0, ddof=1)
    out = np.full(C, 1.0)
    ok = w > 0
    var_plus = (L - 1) / L * w[ok] + b[ok] / L
    out[ok] = np.sqrt(var_plus / w[ok])
    return out


def fit_global(phi: PhiTensor, labels: np.ndarray | None, cfg: EnsembleConfig,
               domain_ids: tuple[str, ...] = (), workers: int = 1) -> GlobalPosterior:
    """Sample p(pi, lambda | phi, labels). Labels cover the first len(labels) deaths."""
    cfg.validate()
    if np.any(phi.present.sum(axis=1) < 1):
        uncovered = np.flatnonzero(phi.present.sum(axis=1) < 1).tolist()
        raise IncompletePhi(f"no domain covers cause indices {uncovered}")
    if labels is not None:
        y = np.asarray(labels, dtype=np.int64)
        if y.ndim != 1 or len(y) > phi.n:
            raise InvalidLabels("labels must be a vector no longer than the death count")
        if y.size and (y.min() < 0 or y.max() >= phi.C):
            raise InvalidLabels("label index out of range")
        for i in range(len(y)):
            if not np.any(np.isfinite(phi.log_phi[i, y[i], :])):
                raise InvalidLabels(
                    f"death {phi.death_ids[i]!r} is labeled with a cause no domain covers"
                )
        if len(y) == 0:
            labels = None

    tasks = [(phi, labels, cfg, chain) for chain in range(cfg.chains)]
    if workers > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.chains)) as pool:
            results = list(pool.map(_chain_task, tasks))
    else:
        results = [_run_chain(*t) for t in tasks]

    pi_by_chain = np.stack([r[0] for r in results])
    pi_draws = np.concatenate([r[0] for r in results])
    pi_tilde_draws = (
        np.concatenate([r[1] for r in results]) if results[0][1] is not None else None
    )
    lambda_draws = np.concatenate([r[2] for r in results])
    log_post = np.concatenate([r[3] for r in results])
    accs = [r[4] for r in results]
    acceptance = float(np.mean(accs)) if accs[0] is not None else None

    rhat = split_rhat(pi_by_chain)
    bad = np.flatnonzero(np.nan_to_num(rhat, nan=1.0) > 1.1)
    if bad.size:
        warnings.warn(
            f"split-chain R-hat above 1.1 for pi coordinates {bad.tolist()} "
            f"(max {float(np.nanmax(rhat)):.3f}); consider more iterations",
            stacklevel=2,
        )
    return GlobalPosterior(
        pi_draws=pi_draws,
        pi_tilde_draws=pi_tilde_draws,
        lambda_draws=lambda_draws,
        log_post=log_post,
        acceptance_rate=acceptance,
        config=cfg,
        domain_ids=tuple(domain_ids),
        rhat_pi=rhat,
    )


def classify(phi: PhiTensor, post: GlobalPosterior) -> Classification:
    """Posterior-predictive cause probabilities, averaged over pooled draws."""
    if post.pi_draws.shape[1] != phi.C or post.lambda_draws.shape[2] != phi.M:
        raise DimensionMismatch("posterior draws disagree with phi dimensions")
    n, C = phi.n, phi.C
    # One max-subtraction per death keeps exp() in range; exp(-inf) = 0 drops
    # absent (c,m) cells from the sums.
    shift = phi.log_phi.max(axis=(1, 2), keepdims=True)
    phi_exp = np.exp(phi.log_phi - shift)
    probs = np.zeros((n, C))
    for d in range(post.D):
        num = np.einsum("icm,cm->ic", phi_exp, post.lambda_draws[d]) * post.pi_draws[d]
        probs += num / num.sum(axis=1, keepdims=True)
    probs /= post.D
    top = np.argmax(probs, axis=1).astype(np.int64)  # argmax takes the lowest index on ties
    return Classification(probs=probs, top=top, death_ids=phi.death_ids)


def adjust_csmf(pi_hat: np.ndarray, n0: int, heldout_counts: np.ndarray) -> np.ndarray:
    """Blend the fitted CSMF with exactly known held-out label counts."""
    pi_hat = np.asarray(pi_hat, dtype=np.float64)
    heldout = np.asarray(heldout_counts, dtype=np.int64)
    if pi_hat.shape != heldout.shape:
        raise DimensionMismatch("pi_hat and heldout_counts must share a length")
    if abs(float(pi_hat.sum()) - 1.0) > 1e-8 or np.any(pi_hat < 0):
        raise NotASimplex("pi_hat must be a probability vector")
    n_h = int(heldout.sum())
    if n_h > n0:
        raise CountOverflow(f"held-out count {n_h} exceeds total {n0}")
    return ((n0 - n_h) / n0) * pi_hat + heldout / n0


def _one_hot(labels: np.ndarray, C: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], C))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def run_variant(reg: FederationRegistry, target: Dataset, cfg: EnsembleConfig,
                local_hyper: LcmHyper | None = None,
                local_cfg: GibbsConfig | None = None,
                workers: int = 1) -> tuple[GlobalPosterior, Classification, np.ndarray]:
    """Fit one fine-tuning variant on a partially labeled target.

    Returns the posterior, a classification of every target death (known
    labels become one-hot rows except under plain, which ignores labels),
    and the CSMF estimate. When tie_pi holds, the estimate refers to the
    full target and blends in held-out label counts; otherwise it refers to
    the deaths the sampler actually saw.
    """
    cfg.validate()
    C = len(target.cause_list)
    labeled_idx = np.flatnonzero(target.labeled_mask)
    unlabeled_idx = np.flatnonzero(~target.labeled_mask)
    n_L = labeled_idx.shape[0]

    local_summary = None
    heldout_idx = np.array([], dtype=np.int64)
    partial_idx = np.array([], dtype=np.int64)
    if cfg.variant == "plain":
        fit_idx = np.arange(target.n)
        fit_labels = None
    elif cfg.variant == "partial":
        partial_idx = labeled_idx
        fit_idx = np.concatenate([partial_idx, unlabeled_idx])
        fit_labels = target.y[partial_idx]
    elif cfg.variant in ("domain", "mix"):
        if n_L < 2 * C:
            raise InsufficientLocalLabels(
                f"variant {cfg.variant!r} needs at least {2 * C} labeled deaths, got {n_L}"
            )
        if cfg.variant == "domain":
            heldout_idx = labeled_idx
        else:
            rng = derive_rng("mix-split", target.domain_id, cfg.seed)
            n_local = round_half_up(cfg.mix_split_fraction * n_L)
            if n_local == 0 or n_local == n_L:
                raise InsufficientLocalLabels("mix split left one part empty")
            perm = rng.permutation(n_L)
            heldout_idx = np.sort(labeled_idx[perm[:n_local]])
            partial_idx = np.sort(labeled_idx[perm[n_local:]])
        local_data = target.subset(heldout_idx, domain_id=f"{target.domain_id}-local")
        if local_cfg is None:
            local_cfg = GibbsConfig(
                iterations=cfg.iterations,
                burn_in=cfg.burn_in,
                thin=cfg.thin,
                seed=derive_seed("local-model", target.domain_id, cfg.seed),
            )
        local_summary = train_lcm(local_data, local_hyper or LcmHyper(), local_cfg)
        reg = reg.extend(local_summary)
        fit_idx = np.concatenate([partial_idx, unlabeled_idx])
        fit_labels = target.y[partial_idx] if partial_idx.size else None

    fit_data = target.subset(fit_idx)
    phi = build_phi(reg, fit_data)
    post = fit_global(phi, fit_labels, cfg, domain_ids=reg.domain_ids, workers=workers)
    fitted = classify(phi, post)

    probs = np.empty((target.n, C))
    probs[fit_idx] = fitted.probs
    if cfg.variant != "plain":
        known = np.concatenate([partial_idx, heldout_idx])
        if known.size:
            probs[known] = _one_hot(target.y[known], C)
    top = np.argmax(probs, axis=1).astype(np.int64)
    classification = Classification(probs=probs, top=top, death_ids=target.death_ids)

    pi_mean = post.pi_mean()
    if cfg.tie_pi:
        heldout_counts = np.bincount(target.y[heldout_idx], minlength=C).astype(np.int64)
        csmf = adjust_csmf(pi_mean, target.n, heldout_counts)
    else:
        csmf = pi_mean
    return post, classification, csmf
