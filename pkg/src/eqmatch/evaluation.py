"""Quantitative checks: stationarity at data, local-minima membership,
the descent convergence bound, and desk-scale sample-quality metrics.

FID does not exist at 2D scale; quality is measured by an unbiased squared
MMD with a sum of RBF kernels (never presented as FID), with significance
judged against a permutation null.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .model import GradientFieldModel
from .objective import corrupt
from .sampler import SamplerConfig, as_field, sample

DEFAULT_BANDWIDTHS = (0.1, 0.5, 1.0, 2.0, 5.0)


# ---------------------------------------------------------------------------
# stationarity / minima checks


@dataclass
class GradNormStats:
    mean: float
    p05: float
    p50: float
    p95: float

    @classmethod
    def of(cls, norms: np.ndarray) -> "GradNormStats":
        return cls(mean=float(norms.mean()), p05=float(np.percentile(norms, 5)),
                   p50=float(np.percentile(norms, 50)), p95=float(np.percentile(norms, 95)))


def grad_norm_at_data(model_or_field, data: np.ndarray, seed: int = 0,
                      label=None) -> dict[str, GradNormStats]:
    """Gradient-norm statistics at data points, with the same statistics at
    half-corrupted points as the contrast scale."""
    f = as_field(model_or_field, label=label)
    data = np.asarray(data, dtype=np.float64)
    at_data = np.linalg.norm(f(data, 0.0), axis=1)
    rng = np.random.default_rng(seed)
    halfway = corrupt(data, rng.standard_normal(data.shape), np.full(len(data), 0.5))
    at_half = np.linalg.norm(f(halfway, 0.0), axis=1)
    return {"at_data": GradNormStats.of(at_data), "at_half_corrupted": GradNormStats.of(at_half)}


def local_minima_membership(model_or_field, data: np.ndarray, n_inits: int,
                            radius: float, config: SamplerConfig,
                            seed: int = 0, label=None) -> float:
    """Fraction of descent endpoints (from fresh noise) that land within
    `radius` of some data point."""
    f = as_field(model_or_field, label=label)
    data = np.asarray(data, dtype=np.float64)
    x0 = np.random.default_rng(seed).standard_normal((n_inits, data.shape[1]))
    endpoints = sample(f, x0, config).final
    d = cdist(endpoints, data)
    return float(np.mean(d.min(axis=1) <= radius))


# ---------------------------------------------------------------------------
# convergence bound on analytic quadratics


@dataclass
class QuadraticEnergy:
    """E(x) = 0.5 x^T A x for symmetric PSD A; smoothness constant is the
    largest eigenvalue and the infimum is 0."""

    A: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(self.A, self.A.T):
            raise ValueError("A must be symmetric")
        eigs = np.linalg.eigvalsh(self.A)
        if eigs.min() < -1e-12:
            raise ValueError("A must be positive semi-definite")
        self.L = float(eigs.max())

    def energy(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return 0.5 * np.sum(x * (x @ self.A), axis=1)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.A

    e_inf: float = field(default=0.0, init=False)


@dataclass
class BoundCheckResult:
    passed: bool
    worst_slack: float  # min over cases of (bound - achieved); >= 0 iff passed
    trivial: bool       # eta == 0 makes the bound vacuous
    violations: int = 0


def convergence_bound_check(quad: QuadraticEnergy, eta: float,
                            horizons: list[int], x0s: np.ndarray) -> BoundCheckResult:
    """Assert min_{k<K} ||grad(x_k)||^2 <= 2 (E(x0) - E_inf) / (eta K) for
    every start and horizon; requires eta <= 1/L."""
    if eta < 0.0:
        raise ValueError("eta must be >= 0")
    if eta == 0.0:
        return BoundCheckResult(passed=True, worst_slack=np.inf, trivial=True)
    if eta > 1.0 / quad.L + 1e-12:
        raise ValueError(f"eta={eta} exceeds 1/L={1.0 / quad.L}")
    x0s = np.atleast_2d(np.asarray(x0s, dtype=np.float64))
    k_max = max(horizons)
    x = x0s.copy()
    sq_norms = np.empty((k_max, len(x0s)))
    for k in range(k_max):
        g = quad.grad(x)
        sq_norms[k] = np.sum(g * g, axis=1)
        x = x - eta * g
    e0 = quad.energy(x0s)
    worst = np.inf
    violations = 0
    for K in horizons:
        achieved = sq_norms[:K].min(axis=0)
        bound = 2.0 * (e0 - quad.e_inf) / (eta * K)
        slack = bound - achieved
        worst = min(worst, float(slack.min()))
        violations += int(np.sum(slack < 0))
    return BoundCheckResult(passed=violations == 0, worst_slack=worst,
                            trivial=False, violations=violations)


# ---------------------------------------------------------------------------
# two-sample quality metrics


def _kernel_sum(sq_dists: np.ndarray, bandwidths) -> np.ndarray:
    k = np.zeros_like(sq_dists)
    for bw in bandwidths:
        k += np.exp(-0.5 * sq_dists / (bw * bw))
    return k


def mmd(samples: np.ndarray, reference: np.ndarray,
        bandwidths=DEFAULT_BANDWIDTHS) -> float:
    """Unbiased squared MMD under a sum of RBF kernels. The estimator may go
    slightly negative on matching distributions; callers clamp for reporting."""
    x = np.asarray(samples, dtype=np.float64)
    y = np.asarray(reference, dtype=np.float64)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("both sets need at least 2 points")
    # the estimator is symmetric; canonicalize operand order so the float
    # summation order is too, making mmd(a, b) == mmd(b, a) bit-exact
    if x.tobytes() > y.tobytes():
        x, y = y, x
    m, n = len(x), len(y)
    kxx = _kernel_sum(cdist(x, x, "sqeuclidean"), bandwidths)
    kyy = _kernel_sum(cdist(y, y, "sqeuclidean"), bandwidths)
    kxy = _kernel_sum(cdist(x, y, "sqeuclidean"), bandwidths)
    a = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    b = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    c = kxy.sum() / (m * n)
    return float(a + b - 2.0 * c)


def mmd_permutation_null(samples: np.ndarray, reference: np.ndarray,
                         n_permutations: int = 200, seed: int = 0,
                         bandwidths=DEFAULT_BANDWIDTHS) -> np.ndarray:
    """Null distribution of the estimator under pooled relabeling (one
    kernel matrix, re-indexed per permutation)."""
    x = np.asarray(samples, dtype=np.float64)
    y = np.asarray(reference, dtype=np.float64)
    m, n = len(x), len(y)
    pool = np.concatenate([x, y])
    k = _kernel_sum(cdist(pool, pool, "sqeuclidean"), bandwidths)
    np.fill_diagonal(k, 0.0)
    rng = np.random.default_rng(seed)
    out = np.empty(n_permutations)
    for i in range(n_permutations):
        perm = rng.permutation(m + n)
        ix, iy = perm[:m], perm[m:]
        kxx = k[np.ix_(ix, ix)].sum() / (m * (m - 1))
        kyy = k[np.ix_(iy, iy)].sum() / (n * (n - 1))
        kxy = k[np.ix_(ix, iy)].sum() / (m * n)
        out[i] = kxx + kyy - 2.0 * kxy
    return out


def mode_coverage(samples: np.ndarray, modes: np.ndarray,
                  radius: float) -> tuple[float, float]:
    """(fraction of modes with >= 1 sample within radius,
        fraction of samples within radius of any mode)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    modes = np.atleast_2d(np.asarray(modes, dtype=np.float64))
    if len(modes) == 0:
        raise ValueError("modes must be non-empty")
    d = cdist(samples, modes)
    covered = float(np.mean(d.min(axis=0) <= radius))
    in_mode = float(np.mean(d.min(axis=1) <= radius))
    return covered, in_mode


def auroc(scores_id: np.ndarray, scores_ood: np.ndarray) -> float:
    """Rank AUROC with half credit for ties; higher score means more OOD."""
    scores_id = np.asarray(scores_id, dtype=np.float64)
    scores_ood = np.asarray(scores_ood, dtype=np.float64)
    if len(scores_id) == 0 or len(scores_ood) == 0:
        raise ValueError("both score sets must be non-empty")
    pooled = np.concatenate([scores_id, scores_ood])
    ranks = rankdata(pooled)
    n_id, n_ood = len(scores_id), len(scores_ood)
    r_ood = ranks[n_id:].sum()
    u = r_ood - n_ood * (n_ood + 1) / 2.0
    return float(u / (n_id * n_ood))


def nearest_neighbor_audit(samples: np.ndarray, train: np.ndarray,
                           k: int) -> np.ndarray:
    """Exact top-k squared Euclidean distances into the train set, ascending."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(train):
        raise ValueError(f"k={k} exceeds train set size {len(train)}")
    d = cdist(samples, train, "sqeuclidean")
    return np.sort(d, axis=1)[:, :k]


def component_energy(model: GradientFieldModel, x, label=None) -> np.ndarray:
    """Dot-construction energy x . f(x) applied to ANY field model, used to
    score composed samples against each member component."""
    x = np.asarray(x, dtype=np.float64)
    f = model.forward_values(x, label=label)
    return np.sum(x * f, axis=1)


def partial_noise_sweep(model_field, baseline_field, gammas, config: SamplerConfig,
                        holdout: np.ndarray, reference: np.ndarray,
                        seed: int = 0, bandwidths=DEFAULT_BANDWIDTHS) -> dict:
    """Quality-vs-start-noise curves: corrupt held-out data at each start
    gamma, denoise with both fields, score MMD against the reference."""
    holdout = np.asarray(holdout, dtype=np.float64)
    curves = {"gamma": [float(g) for g in gammas], "model": [], "baseline": []}
    for i, g in enumerate(gammas):
        rng = np.random.default_rng(seed + i)
        eps = rng.standard_normal(holdout.shape)
        start = corrupt(holdout, eps, np.full(len(holdout), float(g)))
        for key, fld in (("model", model_field), ("baseline", baseline_field)):
            final = sample(as_field(fld), start, config).final
            curves[key].append(max(0.0, mmd(final, reference, bandwidths)))
    return curves


# ---------------------------------------------------------------------------
# results ledger


def config_fingerprint(payload: dict) -> str:
    """Stable id for (checkpoint, sampler config, dataset, seed) tuples."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class EvalReport:
    metric: str
    value: float
    fingerprint: str
    seed: int
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"metric '{self.metric}' produced a non-finite value")


LEDGER_HEADER = ["fingerprint", "metric", "value", "seed", "aux"]


def append_reports(path, reports: list[EvalReport]) -> None:
    path = Path(path)
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(LEDGER_HEADER)
        for r in reports:
            w.writerow([r.fingerprint, r.metric, "%.17g" % r.value, r.seed,
                        json.dumps(r.aux, sort_keys=True)])


def ledger_has(path, fingerprint: str, metric: str | None = None) -> bool:
    path = Path(path)
    if not path.exists():
        return False
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["fingerprint"] == fingerprint and (metric is None or row["metric"] == metric):
                return True
    return False
