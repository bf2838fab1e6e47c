"""Held-out scoring, attribution divergence, and residual checks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import kendalltau

from .em import BranchingStructure
from .model import EmbeddingPair, EventRecord, NumericsWarning, intensities_at, log_likelihood


@dataclass(frozen=True)
class EvalSplit:
    """A time split: train on ``[0, split_time)``, test on ``[split_time, T)``."""

    split_time: float

    def __post_init__(self):
        if self.split_time < 0.0:
            raise ValueError("split_time must be nonnegative")


@dataclass
class DiagnosticsReport:
    """Bundle of whatever diagnostics a run could compute (others are None)."""

    train_ll_per_event: float | None = None
    test_ll_per_event: float | None = None
    n_train: int = 0
    n_test: int = 0
    hellinger: float | None = None
    phi_rmse: float | None = None
    kendall_tau: float | None = None
    accuracy: float | None = None
    accuracy_naive: float | None = None
    qq_points: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)


def split_eval(record: EventRecord, params, split: EvalSplit):
    """Per-event log-likelihood on the two sides of a time split.

    Test events condition on the full history, including earlier test events.
    An empty side is reported as None with a warning.
    """
    t_s = split.split_time
    if t_s > record.horizon:
        raise ValueError("split_time lies beyond the record horizon")
    n_train = int(np.sum(record.times < t_s))
    n_test = record.N - n_train
    train = test = None
    if n_train > 0:
        train = log_likelihood(record, params, (0.0, t_s)) / n_train
    else:
        warnings.warn("empty train window", NumericsWarning)
    if n_test > 0:
        test = log_likelihood(record, params, (t_s, record.horizon)) / n_test
    else:
        warnings.warn("empty test window", NumericsWarning)
    return train, test


def hellinger_divergence(estimated: BranchingStructure, truth: BranchingStructure) -> float:
    """Mean per-event Hellinger distance between two attributions.

    Each event's attribution is a distribution over (trigger, basis) pairs
    plus background; entries absent from one side count as zero.
    """
    if estimated.record is not truth.record and estimated.record != truth.record:
        raise ValueError("attributions describe different records")
    N = estimated.record.N
    if N == 0:
        raise ValueError("empty record")
    R = max(estimated.R, truth.R)

    def keys(b):
        return (b.j_idx * N + b.i_idx) * R + b.r_idx

    ka, kb = keys(estimated), keys(truth)
    common, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    bc = np.sqrt(estimated.p_background * truth.p_background)
    if common.size:
        j_common = common // (N * R)
        bc += np.bincount(j_common, weights=np.sqrt(estimated.p[ia] * truth.p[ib]),
                          minlength=N)
    h = np.sqrt(np.maximum(0.0, 1.0 - bc))
    return float(h.mean())


def background_qq(record: EventRecord, params, branching: BranchingStructure,
                  seed: int = 0):
    """QQ pairs for the interarrivals of a sampled background subset.

    Each event joins the subset with its background probability; the subset's
    interarrivals are matched against exponential quantiles at the total
    background rate, with plotting positions (i - 1/2) / count.  Returns an
    array of (empirical, theoretical) rows, or None when the subset has fewer
    than two events.
    """
    rng = np.random.default_rng(seed)
    pick = rng.random(record.N) < branching.p_background
    sub = record.times[pick]
    if sub.size < 2:
        warnings.warn("background subset smaller than two events; no QQ points",
                      NumericsWarning)
        return None
    inter = np.sort(np.diff(sub))
    rate = float(np.sum(params.mu))
    if rate <= 0.0:
        raise ValueError("total background rate must be positive for QQ quantiles")
    q = (np.arange(1, inter.size + 1) - 0.5) / inter.size
    theo = -np.log1p(-q) / rate
    return np.column_stack([inter, theo])


def categorical_accuracy(record: EventRecord, params, window):
    """Geometric-mean share of intensity on the realized types in a window.

    Returns ``(score, naive)`` where the naive reference replaces the model
    intensity by the empirical per-type rates of the pre-window history (or of
    the window itself when nothing precedes it).  A realized type with zero
    share drives the geometric mean to zero.
    """
    t_a, t_b = window
    scored = (record.times >= t_a) & (record.times < t_b)
    idx = np.flatnonzero(scored)
    if idx.size == 0:
        warnings.warn("no events in the scored window", NumericsWarning)
        return float("nan"), float("nan")
    lam = intensities_at(record, params, record.times[idx])
    realized = record.types[idx]
    shares = lam[np.arange(idx.size), realized] / lam.sum(axis=1)

    ref = record.types[record.times < t_a]
    if ref.size == 0:
        ref = realized
        warnings.warn("no pre-window history; naive rates use the window itself",
                      NumericsWarning)
    rate_share = np.bincount(ref, minlength=record.n) / ref.size
    naive_shares = rate_share[realized]

    def geo(values):
        if np.any(values <= 0.0):
            return 0.0
        return float(np.exp(np.mean(np.log(values))))

    return geo(shares), geo(naive_shares)


def kendall_distance_correlation(learned: EmbeddingPair, truth: EmbeddingPair) -> float:
    """Kendall tau-b between all n^2 cross dyad distances of two embeddings."""
    if learned.n != truth.n:
        raise ValueError("embeddings must cover the same types")
    d_learned = cdist(learned.reception, learned.influence).ravel()
    d_truth = cdist(truth.reception, truth.influence).ravel()
    tau = kendalltau(d_learned, d_truth).statistic
    return float(tau)


def phi_rmse(estimated: np.ndarray, truth: np.ndarray) -> float:
    """Root-mean-square entrywise error between two influence matrices."""
    a = np.asarray(estimated, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("influence matrices must share a shape")
    return float(np.sqrt(np.mean((a - b) ** 2)))
