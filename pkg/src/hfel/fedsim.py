"""Hierarchical federated averaging on synthetic convex tasks.

Devices run local gradient steps, edge servers average their group's models
weighted by data size every ``local_steps`` steps, and after ``edge_rounds``
edge aggregations the cloud averages the edge models.  The quadratic task
shares one curvature across devices, so the weighted average of local
solutions is exactly the global minimizer and convergence can be checked
against a closed form.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import StepSizeError, StructuralError
from .model import edge_iterations, local_iterations

_BLOWUP = 1e150


@dataclass(frozen=True)
class SyntheticTask:
    """Per-device convex losses.

    ``kind == "quadratic"``: F_n(w) = 1/2 (w - c_n)^T diag(curvature) (w - c_n).
    ``kind == "logistic"``: mean logistic loss on (features_n, labels_n) plus
    ``reg``/2 |w|^2.
    """

    kind: str
    weights: np.ndarray  # |D_n|
    centers: np.ndarray | None = None
    curvature: np.ndarray | None = None
    features: tuple = ()
    labels: tuple = ()
    reg: float = 0.0

    @property
    def n_devices(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        if self.kind == "quadratic":
            return self.centers.shape[1]
        return self.features[0].shape[1]

    def loss(self, n: int, w: np.ndarray) -> float:
        if self.kind == "quadratic":
            d = w - self.centers[n]
            return 0.5 * float(np.dot(self.curvature * d, d))
        z = self.features[n] @ w
        return float(np.mean(np.logaddexp(0.0, -self.labels[n] * z)) + 0.5 * self.reg * np.dot(w, w))

    def grad(self, n: int, w: np.ndarray) -> np.ndarray:
        if self.kind == "quadratic":
            return self.curvature * (w - self.centers[n])
        X, y = self.features[n], self.labels[n]
        s = -y / (1.0 + np.exp(y * (X @ w)))
        return X.T @ s / len(y) + self.reg * w

    def objective(self, w: np.ndarray, members: Sequence[int] | None = None) -> float:
        """Data-weighted mean loss over ``members`` (all devices by default)."""
        idx = range(self.n_devices) if members is None else members
        ws = np.array([self.weights[n] for n in idx], dtype=float)
        vals = np.array([self.loss(n, w) for n in idx])
        return float(np.dot(ws, vals) / ws.sum())

    def optimum(self) -> np.ndarray | None:
        """Closed-form global minimizer for the quadratic family, None otherwise."""
        if self.kind != "quadratic":
            return None
        return self.weights @ self.centers / self.weights.sum()

    def max_curvature(self) -> float:
        if self.kind == "quadratic":
            return float(self.curvature.max())
        return max(0.25 * float(np.linalg.eigvalsh(X.T @ X / len(X)).max()) for X in self.features) + self.reg


def quadratic_task(n_devices: int, dim: int, seed: int = 0, weights=None, curvature_range=(0.5, 2.0),
                   spread: float = 1.0) -> SyntheticTask:
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, spread, size=(n_devices, dim))
    curvature = rng.uniform(*curvature_range, size=dim)
    if weights is None:
        weights = rng.integers(50, 500, size=n_devices).astype(float)
    return SyntheticTask("quadratic", np.asarray(weights, dtype=float), centers, curvature)


def logistic_task(n_devices: int, dim: int, samples: int = 40, seed: int = 0, reg: float = 1e-2) -> SyntheticTask:
    rng = np.random.default_rng(seed)
    truth = rng.normal(size=dim)
    feats, labels = [], []
    for _ in range(n_devices):
        # each device sees a shifted slice of feature space
        X = rng.normal(rng.normal(0.0, 0.5, size=dim), 1.0, size=(samples, dim))
        y = np.where(X @ truth + rng.normal(0.0, 0.5, size=samples) > 0, 1.0, -1.0)
        feats.append(X)
        labels.append(y)
    return SyntheticTask("logistic", np.full(n_devices, float(samples)), features=tuple(feats),
                         labels=tuple(labels), reg=reg)


@dataclass
class ModelState:
    device: np.ndarray  # (N, d)
    edge: np.ndarray  # (K, d)
    cloud: np.ndarray  # (d,)

    @classmethod
    def start(cls, n_devices: int, n_servers: int, w0: np.ndarray) -> "ModelState":
        w0 = np.asarray(w0, dtype=float)
        return cls(np.tile(w0, (n_devices, 1)), np.tile(w0, (n_servers, 1)), w0.copy())


def local_update(task: SyntheticTask, device: int, w: np.ndarray, steps: int, lr: float) -> np.ndarray:
    """``steps`` plain gradient steps on the device's own loss."""
    if steps < 1 or int(steps) != steps:
        raise ValueError(f"local steps must be a positive integer, got {steps}")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    w = np.array(w, dtype=float)
    for _ in range(int(steps)):
        w = w - lr * task.grad(device, w)
        if not np.all(np.isfinite(w)) or np.abs(w).max() > _BLOWUP:
            raise StepSizeError(f"device {device}: local iterate diverged (lr={lr})")
    return w


def _weighted_mean(models: Mapping, weights: Mapping) -> np.ndarray:
    if not models:
        raise StructuralError("cannot aggregate an empty set of models")
    keys = list(models)
    wts = np.array([float(weights[k]) for k in keys])
    if np.any(wts < 0) or wts.sum() <= 0:
        raise ValueError("aggregation weights must be nonnegative with a positive sum")
    stack = np.array([models[k] for k in keys], dtype=float)
    return wts @ stack / wts.sum()


def edge_aggregate(models: Mapping[int, np.ndarray], weights: Mapping[int, float]) -> np.ndarray:
    """Data-size weighted mean of the group's device models."""
    return _weighted_mean(models, weights)


def cloud_aggregate(models: Mapping[int, np.ndarray], weights: Mapping[int, float]) -> np.ndarray:
    """Weighted mean of edge models, each weighted by its group's total data size."""
    return _weighted_mean(models, weights)


def loop_counts(cfg) -> tuple:
    """Integer (local steps, edge rounds): the analytic counts rounded up."""
    return max(1, math.ceil(local_iterations(cfg))), max(1, math.ceil(edge_iterations(cfg)))


@dataclass(frozen=True)
class Trajectory:
    rounds: tuple  # 0..G
    global_objective: tuple
    group_objective: tuple  # one dict server -> objective per round
    final: np.ndarray


def run_global_rounds(task: SyntheticTask, groups: Mapping[int, Sequence[int]], rounds: int, local_steps: int,
                      edge_rounds: int, lr: float, w0=None) -> Trajectory:
    """``rounds`` global iterations; each is ``edge_rounds`` x (``local_steps`` local steps + edge averaging)."""
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    if edge_rounds < 1 or int(edge_rounds) != edge_rounds:
        raise ValueError(f"edge rounds must be a positive integer, got {edge_rounds}")
    groups = {i: tuple(m) for i, m in groups.items() if len(m)}
    seen = sorted(n for m in groups.values() for n in m)
    if seen != list(range(task.n_devices)):
        raise StructuralError("groups must partition the task's devices")
    w = np.zeros(task.dim) if w0 is None else np.asarray(w0, dtype=float).copy()
    weight = {n: task.weights[n] for n in range(task.n_devices)}
    group_weight = {i: sum(weight[n] for n in m) for i, m in groups.items()}

    def snapshot(w, edge):
        return task.objective(w), {i: task.objective(edge[i], m) for i, m in groups.items()}

    edge = {i: w.copy() for i in groups}
    g_obj, p_obj = snapshot(w, edge)
    hist_g, hist_p = [g_obj], [p_obj]
    for _ in range(rounds):
        for i, members in groups.items():
            wi = w
            for _ in range(int(edge_rounds)):
                local = {n: local_update(task, n, wi, local_steps, lr) for n in members}
                wi = edge_aggregate(local, weight)
            edge[i] = wi
        w = cloud_aggregate(edge, group_weight)
        g_obj, p_obj = snapshot(w, edge)
        hist_g.append(g_obj)
        hist_p.append(p_obj)
    return Trajectory(tuple(range(rounds + 1)), tuple(hist_g), tuple(hist_p), w)


def trajectory_csv(traj: Trajectory, meta: Mapping[str, object] | None = None) -> str:
    out = io.StringIO()
    out.write("# hfel fedsim trajectory\n# format_version = 1\n")
    for k, v in (meta or {}).items():
        out.write(f"# {k} = {v}\n")
    servers = sorted(traj.group_objective[0])
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(["round", "global_objective"] + [f"group_{i}_objective" for i in servers])
    for r, g, p in zip(traj.rounds, traj.global_objective, traj.group_objective):
        wr.writerow([r, repr(g)] + [repr(p[i]) for i in servers])
    return out.getvalue()
