"""Versioned on-disk format for base-model summaries, plus registry assembly.

A summary file is a single JSON document with sorted keys and shortest
round-trip float formatting, so exporting the same summary twice yields
byte-identical files and a content checksum is meaningful. Absent-cause
parameter rows are serialized as explicit nulls.

A FederationRegistry collects the M summaries one global fit consumes.
Order matters: domain-mixture weights are indexed by registry position.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import CauseList, SymptomDictionary
from .errors import (
    ChecksumMismatch,
    DuplicateDomainId,
    EmptyRegistry,
    FingerprintMismatch,
    InvalidSummary,
    SchemaVersionUnsupported,
)
from .lcm import BaseModelSummary, LcmHyper, Provenance
from .utils import atomic_write_bytes, sha256_hex

FORMAT_VERSION = "1.0.0"


def _nan_to_null(row: np.ndarray):
    return None if np.all(np.isnan(row)) else row.tolist()


def _summary_document(s: BaseModelSummary) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "domain_id": s.domain_id,
        "C": s.C,
        "K": s.K,
        "p": s.p,
        "cause_list_fingerprint": s.cause_list_fingerprint,
        "dict_fingerprint": s.dict_fingerprint,
        "present": s.present.tolist(),
        "n_by_cause": s.n_by_cause.tolist(),
        "nu_bar": [_nan_to_null(s.nu_bar[c]) for c in range(s.C)],
        "theta_bar": [_nan_to_null(s.theta_bar[c]) for c in range(s.C)],
        "hyper": {
            "K": s.hyper.K,
            "alpha_sb": s.hyper.alpha_sb,
            "theta_prior": list(s.hyper.theta_prior),
            "pi_prior": s.hyper.pi_prior,
            "sparse": s.hyper.sparse,
            "spike_omega_prior": list(s.hyper.spike_omega_prior),
        },
        "provenance": {
            "tool_version": s.provenance.tool_version,
            "seed": s.provenance.seed,
            "iterations": s.provenance.iterations,
            "burn_in": s.provenance.burn_in,
        },
    }


def _canonical_bytes(document: dict) -> bytes:
    try:
        return json.dumps(
            document, sort_keys=True, separators=(",", ":"), allow_nan=False
        ).encode("utf-8")
    except ValueError as exc:
        raise InvalidSummary(f"summary contains non-finite values: {exc}") from None


def summary_bytes(s: BaseModelSummary) -> bytes:
    """Validate and canonically serialize (checksum included)."""
    s.validate()
    for c in range(s.C):
        if s.present[c] and (np.any(np.isnan(s.nu_bar[c])) or np.any(np.isnan(s.theta_bar[c]))):
            raise InvalidSummary(f"present cause {c} has NaN parameters")
    document = _summary_document(s)
    document["checksum"] = sha256_hex(_canonical_bytes(document))
    return _canonical_bytes(document) + b"\n"


def export_summary(s: BaseModelSummary, path) -> None:
    """Validate, canonically serialize, checksum, and atomically write."""
    atomic_write_bytes(path, summary_bytes(s))


def import_summary(path, cause_list: CauseList, symptom_dict: SymptomDictionary) -> BaseModelSummary:
    """Read, verify checksum and fingerprints, re-validate all invariants."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        document = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidSummary(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise InvalidSummary(f"{path}: top level must be an object")

    version = document.get("format_version")
    if not isinstance(version, str) or version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise SchemaVersionUnsupported(f"{path}: cannot read format_version {version!r}")

    stated = document.pop("checksum", None)
    if stated != sha256_hex(_canonical_bytes(document)):
        raise ChecksumMismatch(f"{path}: checksum does not match content")

    if document.get("cause_list_fingerprint") != cause_list.fingerprint:
        raise FingerprintMismatch(f"{path}: summary was built against a different cause list")
    if document.get("dict_fingerprint") != symptom_dict.fingerprint:
        raise FingerprintMismatch(f"{path}: summary was built against a different symptom dictionary")

    try:
        C, K, p = int(document["C"]), int(document["K"]), int(document["p"])
        if C != len(cause_list) or p != len(symptom_dict):
            raise InvalidSummary(f"{path}: C/p disagree with the supplied cause list / dictionary")
        nu_bar = np.full((C, K), np.nan)
        theta_bar = np.full((C, K, p), np.nan)
        for c in range(C):
            if document["nu_bar"][c] is not None:
                nu_bar[c] = np.asarray(document["nu_bar"][c], dtype=np.float64).reshape(K)
            if document["theta_bar"][c] is not None:
                theta_bar[c] = np.asarray(document["theta_bar"][c], dtype=np.float64).reshape(K, p)
        hyper_doc = document["hyper"]
        hyper = LcmHyper(
            K=int(hyper_doc["K"]),
            alpha_sb=float(hyper_doc["alpha_sb"]),
            theta_prior=tuple(float(v) for v in hyper_doc["theta_prior"]),
            pi_prior=float(hyper_doc["pi_prior"]),
            sparse=bool(hyper_doc["sparse"]),
            spike_omega_prior=tuple(float(v) for v in hyper_doc["spike_omega_prior"]),
        )
        prov_doc = document["provenance"]
        summary = BaseModelSummary(
            domain_id=str(document["domain_id"]),
            nu_bar=nu_bar,
            theta_bar=theta_bar,
            present=np.asarray(document["present"], dtype=np.uint8),
            n_by_cause=np.asarray(document["n_by_cause"], dtype=np.int64),
            cause_list_fingerprint=document["cause_list_fingerprint"],
            dict_fingerprint=document["dict_fingerprint"],
            hyper=hyper,
            provenance=Provenance(
                tool_version=str(prov_doc["tool_version"]),
                seed=int(prov_doc["seed"]),
                iterations=int(prov_doc["iterations"]),
                burn_in=int(prov_doc["burn_in"]),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSummary(f"{path}: malformed summary document: {exc}") from None
    if hyper.K != K:
        raise InvalidSummary(f"{path}: hyper.K disagrees with array shape K")
    summary.validate()
    return summary


@dataclass(frozen=True)
class FederationRegistry:
    """Ordered collection of summaries sharing one coordinate system."""

    summaries: tuple[BaseModelSummary, ...]
    cause_list_fingerprint: str
    dict_fingerprint: str
    coverage: np.ndarray = field(init=False)
    complete: bool = field(init=False)

    def __post_init__(self):
        if not self.summaries:
            raise EmptyRegistry("registry needs at least one summary")
        ids = [s.domain_id for s in self.summaries]
        if len(set(ids)) != len(ids):
            raise DuplicateDomainId(f"duplicate domain_id among {ids}")
        for s in self.summaries:
            if (s.cause_list_fingerprint != self.cause_list_fingerprint
                    or s.dict_fingerprint != self.dict_fingerprint):
                raise FingerprintMismatch(
                    f"summary {s.domain_id!r} does not share the registry fingerprints"
                )
        coverage = np.sum([s.present.astype(np.int64) for s in self.summaries], axis=0)
        coverage.setflags(write=False)
        object.__setattr__(self, "summaries", tuple(self.summaries))
        object.__setattr__(self, "coverage", coverage)
        object.__setattr__(self, "complete", bool(np.all(coverage >= 1)))

    @property
    def M(self) -> int:
        return len(self.summaries)

    @property
    def C(self) -> int:
        return self.summaries[0].C

    @property
    def domain_ids(self) -> tuple[str, ...]:
        return tuple(s.domain_id for s in self.summaries)

    def extend(self, summary: BaseModelSummary) -> "FederationRegistry":
        """New registry with `summary` appended (used for local-model fits)."""
        return FederationRegistry(
            summaries=self.summaries + (summary,),
            cause_list_fingerprint=self.cause_list_fingerprint,
            dict_fingerprint=self.dict_fingerprint,
        )


def make_registry(summaries, cause_list: CauseList, symptom_dict: SymptomDictionary) -> FederationRegistry:
    return FederationRegistry(
        summaries=tuple(summaries),
        cause_list_fingerprint=cause_list.fingerprint,
        dict_fingerprint=symptom_dict.fingerprint,
    )


def build_registry(paths, cause_list: CauseList, symptom_dict: SymptomDictionary) -> FederationRegistry:
    """Import every path (caller order fixes mixture-weight indices)."""
    paths = list(paths)
    if not paths:
        raise EmptyRegistry("no summary paths given")
    summaries = [import_summary(p, cause_list, symptom_dict) for p in paths]
    return make_registry(summaries, cause_list, symptom_dict)
