"""Event records, model parameters, and exact intensity/likelihood machinery.

The excitation a type ``l`` event exerts on type ``k`` factorizes into a
spatial weight between latent Euclidean points and an exponential clock in
time.  Spatial weights are renormalized over the finite set of reception
points, so each occurrence distributes exactly one unit of time-integrated
mass (per basis kernel, before the ``xi * gamma`` amplitude) across the
receiving types.  That normalization is what makes the compensator below
exact rather than approximate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

# Squared distances are clamped at SQDIST_CLAMP * beta_sq inside the Gaussian
# exponent so the receptor normalization can never underflow to an all-zero
# denominator, whatever the embedding scale.
SQDIST_CLAMP = 700.0


class NumericsWarning(UserWarning):
    """Raised when a computation hits a guarded degenerate branch."""


# ---------------------------------------------------------------------------
# event records


@dataclass(frozen=True, eq=False)
class EventRecord:
    """A finite, time-sorted record of typed events on ``[0, horizon)``.

    ``types`` holds dense integer ids in ``[0, n)``; ``labels``, when given,
    maps each id back to its external name.  Ties in time are legal and are
    kept in stable input order; tied events do not excite one another.
    """

    types: np.ndarray
    times: np.ndarray
    n: int
    horizon: float
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        types = np.asarray(self.types, dtype=np.int64)
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", float(self.horizon))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
        if types.ndim != 1 or times.ndim != 1 or types.shape != times.shape:
            raise ValueError("types and times must be 1-d arrays of equal length")
        if self.n < 0 or (self.n == 0 and types.size > 0):
            raise ValueError("n must be positive when events are present")
        if self.horizon <= 0.0 or not np.isfinite(self.horizon):
            raise ValueError("horizon must be positive and finite")
        if times.size:
            if not np.all(np.isfinite(times)):
                raise ValueError("event times must be finite")
            if np.any(np.diff(times) < 0.0):
                raise ValueError("event times must be nondecreasing")
            if times[0] < 0.0:
                raise ValueError("event times must be nonnegative")
            if times[-1] >= self.horizon:
                raise ValueError("event times must lie strictly before horizon")
            if types.min() < 0 or types.max() >= self.n:
                raise ValueError("type ids must lie in [0, n)")
        if self.labels is not None and len(self.labels) != self.n:
            raise ValueError("labels must have length n")

    @property
    def N(self) -> int:
        return self.times.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventRecord):
            return NotImplemented
        return (
            self.n == other.n
            and self.horizon == other.horizon
            and self.labels == other.labels
            and np.array_equal(self.types, other.types)
            and np.array_equal(self.times, other.times)
        )

    def count_by_type(self) -> np.ndarray:
        """Occurrence count of each type, shape ``(n,)``."""
        return np.bincount(self.types, minlength=self.n).astype(np.float64)

    def truncated(self, t_end: float) -> "EventRecord":
        """The sub-record of events with ``t < t_end``, with horizon ``t_end``."""
        keep = self.times < t_end
        return EventRecord(self.types[keep], self.times[keep], self.n, t_end, self.labels)


def pair_indices(record: EventRecord) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All ordered pairs ``(i, j)`` with ``t_i < t_j`` in a sorted record.

    Returns flat arrays ``(i_idx, j_idx, dt)``; events with tied times never
    pair with each other.
    """
    times = record.times
    # number of events strictly earlier than each event; ties are excluded
    # because the record is sorted, so those are exactly the first L_j events
    n_earlier = np.searchsorted(times, times, side="left")
    total = int(n_earlier.sum())
    j_idx = np.repeat(np.arange(record.N, dtype=np.int64), n_earlier)
    starts = np.concatenate(([0], np.cumsum(n_earlier)[:-1]))
    i_idx = np.arange(total, dtype=np.int64) - np.repeat(starts, n_earlier)
    dt = times[j_idx] - times[i_idx]
    return i_idx, j_idx, dt


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class KernelBank:
    """Per-basis spatial bandwidths and temporal decay/amplitude triples."""

    beta_sq: np.ndarray  # (R,) spatial variances, > 0
    kappa: np.ndarray    # (R,) temporal decay rates, > 0
    gamma: np.ndarray    # (R,) basis amplitudes, >= 0 (a dormant basis has 0)

    def __post_init__(self):
        for name in ("beta_sq", "kappa", "gamma"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            object.__setattr__(self, name, arr)
        if not (self.beta_sq.shape == self.kappa.shape == self.gamma.shape):
            raise ValueError("beta_sq, kappa, gamma must share shape (R,)")
        if self.beta_sq.ndim != 1 or self.beta_sq.size == 0:
            raise ValueError("kernel bank must hold at least one basis kernel")
        if not np.all(np.isfinite(self.beta_sq)) or np.any(self.beta_sq <= 0.0):
            raise ValueError("beta_sq entries must be positive and finite")
        if not np.all(np.isfinite(self.kappa)) or np.any(self.kappa <= 0.0):
            raise ValueError("kappa entries must be positive and finite")
        if not np.all(np.isfinite(self.gamma)) or np.any(self.gamma < 0.0):
            raise ValueError("gamma entries must be nonnegative and finite")

    @property
    def R(self) -> int:
        return self.beta_sq.size


@dataclass(frozen=True)
class EmbeddingPair:
    """Latent reception points ``X`` and influence points ``Y``, both (n, m)."""

    reception: np.ndarray
    influence: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.reception, dtype=np.float64)
        Y = np.asarray(self.influence, dtype=np.float64)
        object.__setattr__(self, "reception", X)
        object.__setattr__(self, "influence", Y)
        if X.ndim != 2 or Y.ndim != 2 or X.shape != Y.shape:
            raise ValueError("reception and influence must be (n, m) arrays of equal shape")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("embedding coordinates must be finite")

    @property
    def n(self) -> int:
        return self.reception.shape[0]

    @property
    def m(self) -> int:
        return self.reception.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of the latent-geometry excitation model."""

    embedding: EmbeddingPair
    kernels: KernelBank
    xi: np.ndarray  # (n,) per-type exertion, >= 0, mean held at 1 by the fit
    mu: np.ndarray  # (n,) background rates, >= 0

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=np.float64)
        mu = np.asarray(self.mu, dtype=np.float64)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "mu", mu)
        n = self.embedding.n
        if xi.shape != (n,) or mu.shape != (n,):
            raise ValueError("xi and mu must have shape (n,)")
        if not np.all(np.isfinite(xi)) or np.any(xi < 0.0):
            raise ValueError("xi entries must be nonnegative and finite")
        if not np.all(np.isfinite(mu)) or np.any(mu < 0.0):
            raise ValueError("mu entries must be nonnegative and finite")

    @property
    def n(self) -> int:
        return self.embedding.n

    @property
    def m(self) -> int:
        return self.embedding.m

    @property
    def R(self) -> int:
        return self.kernels.R

    @property
    def kappa(self) -> np.ndarray:
        return self.kernels.kappa

    @cached_property
    def _amplitudes(self) -> np.ndarray:
        X = self.embedding.reception
        Y = self.embedding.influence
        d2 = cdist(X, Y, "sqeuclidean")  # [k, l]
        A = np.empty((self.R, self.n, self.n))
        for r in range(self.R):
            b2 = self.kernels.beta_sq[r]
            w = np.exp(-np.minimum(d2, SQDIST_CLAMP * b2) / (2.0 * b2))
            w /= w.sum(axis=0, keepdims=True)  # receptor-normalized per column
            A[r] = w * (self.xi * self.kernels.gamma[r])[np.newaxis, :]
        return A

    def amplitudes(self) -> np.ndarray:
        """Time-integrated response mass per basis, shape ``(R, n, n)``.

        ``A[r, k, l]`` multiplies the unit-mass temporal kernel ``f_r`` in the
        response of an ``l`` occurrence on type ``k``.
        """
        return self._amplitudes


# ---------------------------------------------------------------------------
# kernels


def spatial_kernel(x, y, beta_sq: float, m: int | None = None) -> float:
    """Isotropic Gaussian affinity ``(2 pi b)^(-m/2) exp(-|x-y|^2 / (2 b))``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if beta_sq <= 0.0 or not np.isfinite(beta_sq):
        raise ValueError("beta_sq must be positive and finite")
    if m is None:
        m = x.shape[-1]
    d2 = np.sum((x - y) ** 2, axis=-1)
    return (2.0 * np.pi * beta_sq) ** (-m / 2.0) * np.exp(-d2 / (2.0 * beta_sq))


def normalized_spatial_kernel(x_j, y, X, beta_sq: float) -> float:
    """Share of the Gaussian affinity of ``y`` that lands on receptor ``x_j``.

    ``X`` is the full (n, m) set of reception points; ``x_j`` must be one of
    its rows.  The Gaussian prefactor cancels, and squared distances are
    clamped (see ``SQDIST_CLAMP``) so the denominator stays positive.
    """
    X = np.asarray(X, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if beta_sq <= 0.0 or not np.isfinite(beta_sq):
        raise ValueError("beta_sq must be positive and finite")
    row = np.all(X == x_j, axis=1)
    if not row.any():
        raise ValueError("x_j is not a row of X")
    d2 = np.sum((X - y) ** 2, axis=1)
    w = np.exp(-np.minimum(d2, SQDIST_CLAMP * beta_sq) / (2.0 * beta_sq))
    return float(w[np.argmax(row)] / w.sum())


def temporal_kernel(tau, kappa: float):
    """Unit-mass exponential clock ``kappa * exp(-kappa * tau)`` for tau >= 0."""
    if kappa <= 0.0 or not np.isfinite(kappa):
        raise ValueError("kappa must be positive and finite")
    tau = np.asarray(tau, dtype=np.float64)
    out = np.where(tau >= 0.0, kappa * np.exp(-kappa * np.maximum(tau, 0.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def half_life(kappa: float) -> float:
    """Time for an exponential clock to shed half its remaining mass."""
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    return float(np.log(2.0) / kappa)


def response(k_to: int, k_from: int, tau: float, params, r: int | None = None) -> float:
    """Excitation of a type ``k_from`` occurrence on type ``k_to`` at lag tau.

    Zero at and before lag zero.  With ``r`` given, only that basis kernel's
    term is returned.
    """
    if tau <= 0.0:
        return 0.0
    A = params.amplitudes()
    kappa = params.kappa
    rs = range(A.shape[0]) if r is None else (r,)
    val = 0.0
    for rr in rs:
        val += A[rr, k_to, k_from] * kappa[rr] * np.exp(-kappa[rr] * tau)
    return float(val)


# ---------------------------------------------------------------------------
# intensity and likelihood


def _pair_response(record: EventRecord, params, pairs=None, amplitudes=None):
    """Per-pair response values and per-event intensities.

    Returns ``(H, lam, pairs)`` where ``H[r, e]`` is the basis-``r`` response
    along stored pair ``e`` and ``lam[j]`` the intensity at event ``j``.
    """
    if pairs is None:
        pairs = pair_indices(record)
    i_idx, j_idx, dt = pairs
    A = params.amplitudes() if amplitudes is None else amplitudes
    R = A.shape[0]
    n = record.n
    dyad = record.types[j_idx] * n + record.types[i_idx]
    lam = params.mu[record.types].astype(np.float64, copy=True)
    H = np.empty((R, dt.size))
    for r in range(R):
        kap = params.kappa[r]
        H[r] = A[r].ravel()[dyad] * (kap * np.exp(-kap * dt))
        lam += np.bincount(j_idx, weights=H[r], minlength=record.N)
    return H, lam, pairs


def intensity(k: int, t: float, record: EventRecord, params) -> float:
    """Conditional intensity of type ``k`` at time ``t``.

    Conditions on all record events strictly before ``t``; an event exactly at
    ``t`` contributes nothing.
    """
    if t < 0.0 or t > record.horizon:
        raise ValueError("t must lie in [0, horizon]")
    A = params.amplitudes()
    prior = record.times < t
    val = float(params.mu[k])
    if prior.any():
        tau = t - record.times[prior]
        src = record.types[prior]
        for r in range(A.shape[0]):
            kap = params.kappa[r]
            val += float(np.sum(A[r, k, src] * kap * np.exp(-kap * tau)))
    return val


def intensities_at(record: EventRecord, params, times) -> np.ndarray:
    """Conditional intensities of every type at each query time, ``(q, n)``.

    Uses the exponential-decay recursion, so repeated queries cost
    ``O((N + q) n R)`` plus one ``n x n`` product per query.
    """
    ts = np.asarray(times, dtype=np.float64)
    order = np.argsort(ts, kind="stable")
    A = params.amplitudes()
    R, n = A.shape[0], record.n
    kappa = params.kappa
    out = np.empty((ts.size, n))
    S = np.zeros((R, n))
    cur = 0.0
    ev = 0
    for qi in order:
        t = ts[qi]
        while ev < record.N and record.times[ev] < t:
            te = record.times[ev]
            S *= np.exp(-kappa * (te - cur))[:, None]
            S[:, record.types[ev]] += 1.0
            cur = te
            ev += 1
        S_t = S * np.exp(-kappa * (t - cur))[:, None]
        cur = t
        lam = params.mu.astype(np.float64, copy=True)
        for r in range(R):
            lam += kappa[r] * (A[r] @ S_t[r])
        out[qi] = lam
        S = S_t
    return out


def compensator(record: EventRecord, params, window=None, amplitudes=None) -> float:
    """Integral of the total intensity over ``[t_a, t_b]``, in closed form.

    Exact for this model: each occurrence's spatial mass sums to one over the
    receptor set, so only the exponential clocks need integrating.
    """
    t_a, t_b = (0.0, record.horizon) if window is None else window
    if not (0.0 <= t_a <= t_b <= record.horizon):
        raise ValueError("window must satisfy 0 <= t_a <= t_b <= horizon")
    A = params.amplitudes() if amplitudes is None else amplitudes
    total = (t_b - t_a) * float(np.sum(params.mu))
    live = record.times < t_b
    if live.any():
        t_i = record.times[live]
        src = record.types[live]
        acol = A.sum(axis=1)  # (R, n): total mass an occurrence of each type emits
        for r in range(A.shape[0]):
            kap = params.kappa[r]
            left = np.exp(-kap * np.maximum(0.0, t_a - t_i))
            right = np.exp(-kap * (t_b - t_i))
            total += float(np.sum(acol[r, src] * (left - right)))
    return total


def log_likelihood(record: EventRecord, params, window=None) -> float:
    """Exact log-likelihood of the events falling in ``[t_a, t_b)``.

    Each scored event's intensity conditions on the full record history before
    it, including events outside the window.  A scored event with zero
    intensity yields ``-inf`` (with a warning naming the event).
    """
    t_a, t_b = (0.0, record.horizon) if window is None else window
    _, lam, _ = _pair_response(record, params)
    scored = (record.times >= t_a) & (record.times < t_b)
    lam_s = lam[scored]
    if np.any(lam_s <= 0.0):
        bad = int(np.flatnonzero(scored)[np.argmax(lam_s <= 0.0)])
        warnings.warn(
            f"zero intensity at scored event {bad}; log-likelihood is -inf",
            NumericsWarning,
        )
        return float("-inf")
    return float(np.sum(np.log(lam_s)) - compensator(record, params, (t_a, t_b)))


def influence_matrix(params) -> np.ndarray:
    """Time-integrated pairwise response mass, ``phi[k, l]`` for l -> k."""
    return params.amplitudes().sum(axis=0)


def reorder_types(params: ModelParams, perm) -> ModelParams:
    """Re-index every per-type quantity by ``perm`` (new id -> old id)."""
    perm = np.asarray(perm, dtype=np.int64)
    emb = EmbeddingPair(params.embedding.reception[perm], params.embedding.influence[perm])
    return ModelParams(emb, params.kernels, params.xi[perm], params.mu[perm])
