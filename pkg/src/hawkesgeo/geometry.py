"""First- and second-order moves of the reception points.

The climbed objective is the attributed-data surrogate in which each
occurrence's spatial mass is the raw (unnormalized) Gaussian summed over
receptors and every clock integrates to one.  Its gradient with respect to a
reception point splits into an attraction toward the influence points that
feed it and a repulsion proportional to the Gaussian affinity itself; the
Hessian of the same surrogate is an isotropic part plus a sum of rank-one
terms, and stays block-diagonal across types.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import EmbeddingPair, EventRecord, ModelParams, NumericsWarning


@dataclass(frozen=True)
class ReceptionGradient:
    """Surrogate-objective gradient for each reception point, shape (n, m)."""

    a: np.ndarray


@dataclass(frozen=True)
class ReceptionHessian:
    """Per-type Hessian blocks in split form.

    ``c[k]`` is the isotropic (diagonal) coefficient and ``outer_sum[k]`` the
    positive-semidefinite sum of rank-one terms, so the raw block is
    ``c[k] * I - outer_sum[k]``.  Ceiling forces the isotropic part
    nonpositive, which makes every block negative semidefinite.
    """

    c: np.ndarray          # (n,)
    outer_sum: np.ndarray  # (n, m, m)

    def assembled(self, ceiling: bool = True) -> np.ndarray:
        m = self.outer_sum.shape[1]
        diag = np.minimum(self.c, 0.0) if ceiling else self.c
        return diag[:, None, None] * np.eye(m)[None, :, :] - self.outer_sum


def _gaussian_terms(record: EventRecord, params: ModelParams, branching):
    """Shared pieces: per-basis affinities, displacement vectors, masses."""
    X = params.embedding.reception
    Y = params.embedding.influence
    m = params.m
    diff = X[:, None, :] - Y[None, :, :]          # (n, n, m), [k, l]
    d2 = np.sum(diff * diff, axis=2)
    counts = record.count_by_type()
    weights = counts * params.xi                   # occurrences weighted by exertion
    G = np.empty((params.R, record.n, record.n))
    for r in range(params.R):
        b2 = params.kernels.beta_sq[r]
        G[r] = (2.0 * np.pi * b2) ** (-m / 2.0) * np.exp(-d2 / (2.0 * b2))
    return diff, G, weights


def reception_gradient(record: EventRecord, params: ModelParams,
                       branching) -> ReceptionGradient:
    """Gradient of the surrogate objective in the reception points.

    The repulsive part sums once per occurrence of each influencing type; the
    attractive part weighs displacement by attributed mass.
    """
    diff, G, weights = _gaussian_terms(record, params, branching)
    M = branching.dyad_mass  # (R, n, n)
    a = np.zeros_like(params.embedding.reception)
    for r in range(params.R):
        b2 = params.kernels.beta_sq[r]
        coeff = (-M[r] + weights[None, :] * params.kernels.gamma[r] * G[r]) / b2
        a += np.einsum("kl,klm->km", coeff, diff)
    return ReceptionGradient(a)


def reception_hessian(record: EventRecord, params: ModelParams,
                      branching) -> ReceptionHessian:
    """Per-type blocks of the surrogate Hessian, in split form."""
    diff, G, weights = _gaussian_terms(record, params, branching)
    M = branching.dyad_mass
    n, m = params.embedding.reception.shape
    c = np.zeros(n)
    outer = np.zeros((n, m, m))
    for r in range(params.R):
        b2 = params.kernels.beta_sq[r]
        gauss = weights[None, :] * params.kernels.gamma[r] * G[r]
        c += (gauss - M[r]).sum(axis=1) / b2
        outer += np.einsum("kl,klm,kln->kmn", gauss, diff, diff) / b2**2
    return ReceptionHessian(c, outer)


def hhg_a_step(params: ModelParams, gradient: ReceptionGradient,
               eps: float, N: int) -> np.ndarray:
    """One plain ascent step ``x + eps * a / N``; non-finite rows stay put."""
    if eps <= 0.0 or N <= 0:
        raise ValueError("eps and N must be positive")
    step = (eps / N) * gradient.a
    ok = np.all(np.isfinite(step), axis=1)
    if not ok.all():
        warnings.warn("non-finite gradient rows skipped in ascent step", NumericsWarning)
        step = np.where(ok[:, None], step, 0.0)
    return params.embedding.reception + step


def hhg_b_step(params: ModelParams, gradient: ReceptionGradient,
               hessians: ReceptionHessian, eps1: float | None, eps2: float,
               N: int) -> np.ndarray:
    """One damped Newton ascent step on the reception points.

    The gradient is tilted toward the origin by ``2 N eps2 x`` and the
    (negative semidefinite, post-ceiling) Hessian blocks are shifted by
    ``-2 N (1/eps1 + eps2) I``; with ``eps1=None`` only the second shift
    applies.  Each block solves through a Cholesky factorization of the
    negated system; a block that fails retries once with a tenfold ridge and
    is skipped (with a warning) if still singular.
    """
    if N <= 0:
        raise ValueError("N must be positive")
    inv_eps1 = 0.0 if eps1 is None else 1.0 / eps1
    ridge = 2.0 * N * (inv_eps1 + eps2)
    X = params.embedding.reception
    n, m = X.shape
    atil = gradient.a - 2.0 * N * eps2 * X
    neg_blocks = hessians.outer_sum - np.minimum(hessians.c, 0.0)[:, None, None] * np.eye(m)
    eye = np.eye(m)
    step = np.zeros_like(X)
    try:
        L = np.linalg.cholesky(neg_blocks + ridge * eye)
        z = np.linalg.solve(L, atil[:, :, None])
        step = np.linalg.solve(np.transpose(L, (0, 2, 1)), z)[:, :, 0]
    except np.linalg.LinAlgError:
        for k in range(n):
            solved = False
            for factor in (1.0, 10.0):
                try:
                    Lk = np.linalg.cholesky(neg_blocks[k] + factor * ridge * eye)
                    zk = np.linalg.solve(Lk, atil[k])
                    step[k] = np.linalg.solve(Lk.T, zk)
                    solved = True
                    break
                except np.linalg.LinAlgError:
                    continue
            if not solved:
                warnings.warn(f"singular Newton block for type {k}; step skipped",
                              NumericsWarning)
                step[k] = 0.0
    return X + step


def embedding_inner_loop(record: EventRecord, params: ModelParams, branching,
                         eps1: float | None, eps2: float, N: int,
                         steps: int = 4) -> ModelParams:
    """The damped-Newton inner loop run each M-phase.

    Gradient and Hessian are recomputed after every step because the
    affinities move with the points.
    """
    for _ in range(steps):
        grad = reception_gradient(record, params, branching)
        hess = reception_hessian(record, params, branching)
        X_new = hhg_b_step(params, grad, hess, eps1, eps2, N)
        params = ModelParams(
            EmbeddingPair(X_new, params.embedding.influence),
            params.kernels, params.xi, params.mu,
        )
    return params
