"""Shared numeric and I/O helpers.

All randomness in the package flows through `derive_rng`, which maps a tuple of
labels/integers to an independent, reproducible generator. Nothing reads the
wall clock or OS entropy.
"""
from __future__ import annotations

import hashlib
import os
import tempfile

import numpy as np

__all__ = [
    "sha256_hex",
    "fingerprint_ids",
    "derive_rng",
    "derive_seed",
    "gumbel_argmax",
    "log_dirichlet",
    "is_simplex",
    "largest_remainder_counts",
    "round_half_up",
    "atomic_write_bytes",
    "atomic_write_text",
]


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fingerprint_ids(ids) -> str:
    """Content hash of an ordered identifier list (order-sensitive)."""
    return sha256_hex("\n".join(ids).encode("utf-8"))


def _entropy(parts) -> list[int]:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]


def derive_rng(*parts) -> np.random.Generator:
    """Independent generator keyed by an arbitrary tuple of labels and ints.

    The mapping is a stable hash, so the same parts give the same stream on
    every run and process, and distinct parts give unrelated streams.
    """
    return np.random.default_rng(_entropy(parts))


def derive_seed(*parts) -> int:
    """64-bit seed with the same keying scheme as `derive_rng` (for echoing)."""
    return _entropy(parts)[0]


def gumbel_argmax(rng: np.random.Generator, logw: np.ndarray, axis: int = -1) -> np.ndarray:
    """Exact categorical draws proportional to exp(logw) along `axis`.

    Cells at -inf are never selected. Rows that are entirely -inf are the
    caller's responsibility (argmax would silently return index 0).
    """
    g = rng.gumbel(size=logw.shape)
    return np.argmax(logw + g, axis=axis)


def log_dirichlet(rng: np.random.Generator, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet draw returned as (values, log-values) along the last axis.

    Works for arbitrarily small concentrations: shapes below 0.1 are sampled
    in log space (Gamma(a) = Gamma(a+1) * U^{1/a}), so log-values stay finite
    even when the linear values underflow to zero.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    small = alpha < 0.1
    boosted = np.where(small, alpha + 1.0, alpha)
    g = rng.gamma(shape=boosted)
    log_g = np.log(np.maximum(g, np.finfo(np.float64).tiny))
    if np.any(small):
        u = 1.0 - rng.random(size=alpha.shape)  # strictly in (0, 1]
        log_g = np.where(small, log_g + np.log(u) / np.maximum(alpha, 1e-300), log_g)
    norm = _logsumexp_last(log_g)
    log_x = log_g - norm[..., None]
    return np.exp(log_x), log_x


def _logsumexp_last(a: np.ndarray) -> np.ndarray:
    m = np.max(a, axis=-1)
    return m + np.log(np.sum(np.exp(a - m[..., None]), axis=-1))


def is_simplex(v: np.ndarray, tol: float = 1e-8) -> bool:
    v = np.asarray(v, dtype=np.float64)
    return bool(v.ndim == 1 and v.size >= 1 and np.all(v >= -tol) and abs(v.sum() - 1.0) <= tol)


def largest_remainder_counts(probs: np.ndarray, total: int) -> np.ndarray:
    """Apportion `total` into integer counts proportional to `probs`.

    Floors the quotas, then hands the leftover units to the largest
    remainders (ties broken toward the lower index, deterministically).
    """
    probs = np.asarray(probs, dtype=np.float64)
    quotas = probs / probs.sum() * total
    base = np.floor(quotas).astype(np.int64)
    leftover = total - int(base.sum())
    if leftover > 0:
        remainders = quotas - base
        order = np.lexsort((np.arange(len(probs)), -remainders))
        base[order[:leftover]] += 1
    return base


def round_half_up(x: float) -> int:
    """round() with deterministic half-up ties (3.5 -> 4), not banker's."""
    return int(np.floor(x + 0.5))


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory plus atomic rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
