"""Report rendering: posterior tables, weight matrices, per-death CSVs.

All float cells use shortest round-trip decimal formatting so identical
runs emit identical bytes.
"""
from __future__ import annotations

import numpy as np

from .calibration import CalibrationResult
from .data import CauseList
from .ensemble import Classification, GlobalPosterior


def _f(v) -> str:
    return repr(float(v))


def pi_table_csv(pi_draws: np.ndarray, cause_list: CauseList) -> str:
    """Per-cause posterior mean with a central 95% interval."""
    mean = pi_draws.mean(axis=0)
    lo, hi = np.quantile(pi_draws, [0.025, 0.975], axis=0)
    lines = ["cause,mean,q2.5,q97.5"]
    for c, name in enumerate(cause_list.causes):
        lines.append(f"{name},{_f(mean[c])},{_f(lo[c])},{_f(hi[c])}")
    return "\n".join(lines) + "\n"


def lambda_matrix_csv(post: GlobalPosterior, cause_list: CauseList) -> str:
    """Posterior-mean domain weight per (cause, domain)."""
    lam = post.lambda_mean()
    header = ",".join(["cause", *post.domain_ids])
    lines = [header]
    for c, name in enumerate(cause_list.causes):
        lines.append(",".join([name, *(_f(v) for v in lam[c])]))
    return "\n".join(lines) + "\n"


def classification_csv(cls: Classification, cause_list: CauseList) -> str:
    header = ",".join(["death_id", *cause_list.causes, "top_cause"])
    lines = [header]
    for i, death_id in enumerate(cls.death_ids):
        cells = [death_id, *(_f(v) for v in cls.probs[i]),
                 cause_list.causes[int(cls.top[i])]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def posterior_text(post: GlobalPosterior, cause_list: CauseList) -> str:
    """Human-readable fit summary with convergence diagnostics."""
    mean = post.pi_draws.mean(axis=0)
    lo, hi = np.quantile(post.pi_draws, [0.025, 0.975], axis=0)
    out = [
        f"draws: {post.D} (chains: {post.config.chains})",
        f"variant: {post.config.variant}   lambda prior: {post.config.lambda_prior.kind}",
    ]
    if post.acceptance_rate is not None:
        out.append(f"Metropolis acceptance rate: {post.acceptance_rate:.3f}")
    out.append("")
    out.append(f"{'cause':<28}{'mean':>10}{'2.5%':>10}{'97.5%':>10}{'R-hat':>8}")
    for c, name in enumerate(cause_list.causes):
        rhat = post.rhat_pi[c]
        rhat_s = f"{rhat:.3f}" if np.isfinite(rhat) else "n/a"
        out.append(f"{name:<28}{mean[c]:>10.4f}{lo[c]:>10.4f}{hi[c]:>10.4f}{rhat_s:>8}")
    out.append("")
    return "\n".join(out)


def calibration_text(result: CalibrationResult, cause_list: CauseList) -> str:
    """Calibration report; leads with the method's scope and simplification."""
    out = [
        "confusion-matrix calibration (hard-classification variant)",
        "",
        "NOTE: this baseline calibrates each model's single top predicted",
        "cause, not its full probability vector, and estimates prevalence",
        "only; it does not assign causes to individual deaths.",
        "",
        f"shrinkage: gamma ~ Gamma(shape={result.config.alpha}, "
        f"rate={result.config.beta_rate}) (prior mean "
        f"{result.config.alpha / result.config.beta_rate})",
        "",
    ]
    mean = result.pi_mean()
    lo, hi = result.pi_interval()
    out.append(f"{'cause':<28}{'mean':>10}{'2.5%':>10}{'97.5%':>10}")
    for c, name in enumerate(cause_list.causes):
        out.append(f"{name:<28}{mean[c]:>10.4f}{lo[c]:>10.4f}{hi[c]:>10.4f}")
    out.append("")
    names = result.domain_ids or tuple(
        f"model_{m + 1}" for m in range(result.confusion_mean.shape[0])
    )
    for m, dom in enumerate(names):
        out.append(f"posterior-mean confusion matrix, model {dom}")
        out.append("  rows: true cause; columns: predicted cause")
        for c in range(len(cause_list)):
            row = " ".join(f"{v:8.4f}" for v in result.confusion_mean[m, c])
            out.append(f"  {cause_list.causes[c]:<26} {row}")
        out.append("")
    return "\n".join(out)
