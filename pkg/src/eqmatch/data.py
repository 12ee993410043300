"""Toy 2D data sources with deterministic seeding.

Data is standardized to roughly unit scale (modes inside [-4, 4]^2) so the
unit-Gaussian noise end of the corruption path lives on a comparable scale.
Labels are mixture-component (or moon) indices and double as class
conditions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("gaussian-mixture", "two-moons", "checkerboard", "uniform-box")

FLOAT_FMT = "%.17g"  # round-trips float64 exactly


def default_modes(n_modes: int = 8, radius: float = 1.5) -> np.ndarray:
    """Equally spaced circle modes, offset so none sits on the x1=x2 diagonal
    (keeps the constant-point OOD set away from the data).

    The default radius keeps the mixture at roughly unit scale per
    coordinate, comparable to the standard-normal noise end of the
    corruption path; with data far outside the noise bulk the interior of
    the true equilibrium field degenerates into a spurious basin around the
    data mean and descent from noise never escapes it."""
    angles = np.pi / 8.0 + 2.0 * np.pi * np.arange(n_modes) / n_modes
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


@dataclass
class ToyDistribution:
    kind: str = "gaussian-mixture"
    modes: np.ndarray = field(default_factory=default_modes)
    mode_std: float | np.ndarray = 0.3
    weights: np.ndarray | None = None
    box: tuple[float, float, float, float] = (-8.0, 8.0, -8.0, 8.0)
    noise_scale: float = 0.08

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind '{self.kind}'")
        self.modes = np.asarray(self.modes, dtype=np.float64).reshape(-1, 2)
        stds = np.broadcast_to(np.asarray(self.mode_std, dtype=np.float64),
                               (len(self.modes),))
        if np.any(stds <= 0.0):
            raise ValueError("mode_std must be > 0")
        if self.weights is None:
            self.weights = np.full(len(self.modes), 1.0 / len(self.modes))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(self.modes),):
            raise ValueError("one weight per mode required")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ValueError("weights must be non-negative and sum to 1")
        xmin, xmax, ymin, ymax = self.box
        if not (xmin < xmax and ymin < ymax):
            raise ValueError(f"degenerate box {self.box}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "modes": self.modes.tolist(),
            "mode_std": (self.mode_std.tolist() if isinstance(self.mode_std, np.ndarray)
                         else float(self.mode_std)),
            "weights": self.weights.tolist(),
            "box": list(self.box),
            "noise_scale": float(self.noise_scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyDistribution":
        kw = dict(kind=d.get("kind", "gaussian-mixture"))
        if d.get("modes") is not None:
            kw["modes"] = np.asarray(d["modes"])
        if d.get("mode_std") is not None:
            ms = d["mode_std"]
            kw["mode_std"] = np.asarray(ms) if isinstance(ms, list) else float(ms)
        if d.get("weights") is not None:
            kw["weights"] = np.asarray(d["weights"])
        if d.get("box") is not None:
            kw["box"] = tuple(d["box"])
        if d.get("noise_scale") is not None:
            kw["noise_scale"] = float(d["noise_scale"])
        return cls(**kw)


def _sample_mixture(dist: ToyDistribution, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    comp = rng.choice(len(dist.modes), size=n, p=dist.weights)
    stds = np.broadcast_to(np.asarray(dist.mode_std, dtype=np.float64),
                           (len(dist.modes),))
    pts = dist.modes[comp] + stds[comp, None] * rng.standard_normal((n, 2))
    return pts, comp.astype(np.int64)


def _sample_moons(dist: ToyDistribution, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    n_out = n - n // 2
    t_out = rng.uniform(0.0, np.pi, n_out)
    t_in = rng.uniform(0.0, np.pi, n // 2)
    outer = np.stack([np.cos(t_out), np.sin(t_out)], axis=1)
    inner = np.stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)], axis=1)
    pts = 2.5 * np.concatenate([outer, inner]) - np.array([1.25, 0.6])
    pts = pts + dist.noise_scale * rng.standard_normal((n, 2))
    labels = np.concatenate([np.zeros(n_out, np.int64), np.ones(n // 2, np.int64)])
    return pts, labels


def _sample_checkerboard(n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    x1 = rng.uniform(-2.0, 2.0, n)
    x2 = rng.uniform(0.0, 1.0, n) - rng.integers(0, 2, n) * 2.0
    x2 = x2 + np.floor(x1) % 2
    return 2.0 * np.stack([x1, x2], axis=1), np.zeros(n, np.int64)


def _sample_box(dist: ToyDistribution, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    xmin, xmax, ymin, ymax = dist.box
    pts = np.stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)], axis=1)
    return pts, np.zeros(n, np.int64)


def draw_from(dist: ToyDistribution, n: int, rng: np.random.Generator
              ) -> tuple[np.ndarray, np.ndarray]:
    """i.i.d. draws plus integer labels from a caller-owned generator (the
    training loop's stream)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if dist.kind == "gaussian-mixture":
        return _sample_mixture(dist, n, rng)
    if dist.kind == "two-moons":
        return _sample_moons(dist, n, rng)
    if dist.kind == "checkerboard":
        return _sample_checkerboard(n, rng)
    return _sample_box(dist, n, rng)


def sample_data(dist: ToyDistribution, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """i.i.d. draws plus integer labels, reproducible per seed."""
    return draw_from(dist, n, np.random.default_rng(seed))


def sample_noise(n: int, d: int, seed: int) -> np.ndarray:
    """Standard normal [n, d], the gamma=0 endpoint of the corruption path."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    return np.random.default_rng(seed).standard_normal((n, d))


def fixed_memorization_set(k: int = 8, seed: int = 0) -> np.ndarray:
    """k well-separated fixed points (pairwise distance >= 2): one at the
    origin plus a seed-rotated ring. The overfitting fixture for the
    stationarity and local-minima checks.

    Placing a point at the set's mean matters: the true equilibrium field of
    a finite point set always has an interior critical point at the data
    mean (the noise-like region sees only the average pull), and descent
    started from standard noise passes through it. With this layout that
    critical point is itself a training point rather than a spurious
    minimum."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > 12:
        raise ValueError("memorization set is meant to be small (k <= 12)")
    center = np.zeros((1, 2))
    if k == 1:
        return center
    n_ring = k - 1
    radius = 2.4 if n_ring < 3 else max(2.4, 1.01 / np.sin(np.pi / n_ring))
    phase = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi)
    angles = phase + 2.0 * np.pi * np.arange(n_ring) / n_ring
    ring = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return np.concatenate([center, ring])


# ---------------------------------------------------------------------------
# out-of-distribution sets


def ood_sets(dist: ToyDistribution, n: int, seed: int) -> dict[str, np.ndarray]:
    """Three OOD sets against an in-distribution mixture: the mixture shifted
    by +8 in both coordinates, a uniform box over [-8, 8]^2, and constant
    points (both coordinates equal)."""
    rng = np.random.default_rng(seed)
    shifted, _ = _sample_mixture(dist, n, rng)
    shifted = shifted + 8.0
    box = np.stack([rng.uniform(-8, 8, n), rng.uniform(-8, 8, n)], axis=1)
    c = rng.uniform(-8.0, 8.0, n)
    constant = np.stack([c, c], axis=1)
    return {"shifted-mixture": shifted, "uniform-box": box, "constant": constant}


# ---------------------------------------------------------------------------
# CSV interchange


def save_points_csv(path, points: np.ndarray, labels: np.ndarray | None = None) -> None:
    points = np.asarray(points, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = [f"x{i}" for i in range(points.shape[1])]
        if labels is not None:
            header.append("label")
        w.writerow(header)
        for i, row in enumerate(points):
            out = [FLOAT_FMT % v for v in row]
            if labels is not None:
                out.append(str(int(labels[i])))
            w.writerow(out)


def load_points_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_labels = header[-1] == "label"
        d = len(header) - (1 if has_labels else 0)
        pts, labels = [], []
        for row in reader:
            pts.append([float(v) for v in row[:d]])
            if has_labels:
                labels.append(int(row[d]))
    points = np.asarray(pts, dtype=np.float64)
    return points, (np.asarray(labels, dtype=np.int64) if has_labels else None)


def default_mixture() -> ToyDistribution:
    """The standard experiment target: 8 circle modes, sigma 0.4."""
    return ToyDistribution(kind="gaussian-mixture")
