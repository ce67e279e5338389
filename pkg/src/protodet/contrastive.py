"""Domain-prompter contrastive objectives: values and analytic gradients.

Two InfoNCE-style losses over cosine similarity, computed without any
autodiff framework so gradients can be verified against finite differences:

* domain diversity: each virtual domain vector is its own positive, every
  other domain is a negative, so minimizing pushes domains apart;
* prototype consistency: a prototype perturbed by one domain should stay
  close to itself perturbed by a second domain while staying away from other
  prototypes perturbed by that second domain. Perturbation is plain vector
  addition; domains are deliberately not renormalized first.

There is no optimizer here: these are pure functions for numerical
verification of the published objective.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroVectorError

__all__ = [
    "DomainBank",
    "InfoNCETemperatures",
    "perturb",
    "loss_domain",
    "loss_proto",
    "loss_total_dp",
]


@dataclass(frozen=True)
class InfoNCETemperatures:
    """Published defaults: 2 for the prototype loss, 0.1 for the domain loss."""

    tau_proto: float = 2.0
    tau_domain: float = 0.1

    def __post_init__(self) -> None:
        if self.tau_proto <= 0 or self.tau_domain <= 0:
            raise ValueError("temperatures must be > 0")


@dataclass
class DomainBank:
    """Virtual domain vectors; conventionally two per target class."""

    domains: np.ndarray  # (n_dom, dim)

    def __post_init__(self) -> None:
        self.domains = np.asarray(self.domains, dtype=np.float64)
        if self.domains.ndim != 2:
            raise ValueError("domains must be a (n_dom, dim) matrix")

    @classmethod
    def for_classes(cls, n_classes: int, dim: int, seed: int = 0, scale: float = 0.1) -> "DomainBank":
        """Random bank with the conventional n_dom = 2 * n_classes rows."""
        rng = np.random.default_rng(seed)
        return cls(domains=scale * rng.normal(size=(2 * n_classes, dim)))

    @property
    def n_dom(self) -> int:
        return int(self.domains.shape[0])


def perturb(prototype: np.ndarray, domain: np.ndarray) -> np.ndarray:
    """Domain-shifted prototype: elementwise sum."""
    return np.asarray(prototype, dtype=np.float64) + np.asarray(domain, dtype=np.float64)


def _unit_rows(mat: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ZeroVectorError(f"zero vector in {what}")
    return mat / norms[:, None], norms


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_domain(bank: DomainBank, tau_domain: float = 0.1) -> tuple[float, np.ndarray]:
    """Diversity loss over the bank and its gradient w.r.t. every domain.

    For anchor i the positive logit is the (unit) self-similarity and the
    negatives are the cosines to every other domain, all scaled by
    1/tau: L_i = -log softmax_j(cos(d_i, d_j)/tau)_i, averaged over anchors.
    Off-diagonal similarity increases always increase the loss.
    """
    if tau_domain <= 0:
        raise ValueError("tau_domain must be > 0")
    d = bank.domains
    m = d.shape[0]
    if m < 2:
        raise ValueError("need at least two domains")
    unit, norms = _unit_rows(d, "domain bank")
    cos = unit @ unit.T
    np.fill_diagonal(cos, 1.0)
    p = _softmax_rows(cos / tau_domain)
    value = float(np.mean(-np.log(p.diagonal())))

    # dL/dcos_ij = (p_ij - delta_ij) / (m * tau); the diagonal cosine is
    # identically 1, so only off-diagonal terms carry gradient.
    w = (p - np.eye(m)) / (m * tau_domain)
    np.fill_diagonal(w, 0.0)
    s = w + w.T  # cos is symmetric: pair (i,j) collects w_ij + w_ji
    grad = (s @ unit - (s * cos).sum(axis=1)[:, None] * unit) / norms[:, None]
    return value, grad


def loss_proto(
    prototypes: np.ndarray,
    bank: DomainBank,
    pair: tuple[int, int],
    tau_proto: float = 2.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Consistency loss for one sampled domain pair (k, m).

    Anchor i is prototype i perturbed by domain k; candidates are all
    prototypes perturbed by domain m; the positive is the same prototype.
    Returns (value, grad wrt prototypes, grad wrt the full bank); bank rows
    other than k and m have zero gradient.
    """
    if tau_proto <= 0:
        raise ValueError("tau_proto must be > 0")
    protos = np.asarray(prototypes, dtype=np.float64)
    if protos.ndim != 2 or protos.shape[0] < 2:
        raise ValueError("need at least two prototypes")
    k, m = pair
    n = protos.shape[0]
    anchors = protos + bank.domains[k]
    cands = protos + bank.domains[m]
    a_unit, a_norms = _unit_rows(anchors, "perturbed anchors")
    b_unit, b_norms = _unit_rows(cands, "perturbed candidates")
    cos = a_unit @ b_unit.T
    p = _softmax_rows(cos / tau_proto)
    value = float(np.mean(-np.log(p.diagonal())))

    w = (p - np.eye(n)) / (n * tau_proto)
    # d cos_ij / d a_i = (b_unit_j - cos_ij a_unit_i) / |a_i|, and symmetrically
    # for b_j; chain rule sums those into prototype and domain gradients.
    grad_a = (w @ b_unit - (w * cos).sum(axis=1)[:, None] * a_unit) / a_norms[:, None]
    grad_b = (w.T @ a_unit - (w * cos).sum(axis=0)[:, None] * b_unit) / b_norms[:, None]
    grad_protos = grad_a + grad_b
    grad_bank = np.zeros_like(bank.domains)
    grad_bank[k] += grad_a.sum(axis=0)
    grad_bank[m] += grad_b.sum(axis=0)
    return value, grad_protos, grad_bank


def loss_total_dp(value_domain: float, value_proto: float) -> float:
    """The domain-prompter objective is the plain sum of its two parts."""
    return value_domain + value_proto
