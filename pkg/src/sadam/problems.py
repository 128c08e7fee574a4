"""Test objectives with exact gradients, plus stochastic oracles.

Four problem kinds from increasingly hard function classes:

    Quadratic    0.5 * x' diag(a) x          strongly convex, exact everything
    Logistic     mean binary cross-entropy   convex (+ optional L2 ridge)
    Rosenbrock   chained banana function     nonconvex, smooth on a box
    MLP          2-layer tanh classifier     nonconvex, manual backprop

An Oracle wraps a problem and emits stochastic gradients with mean-zero
Gaussian noise (per-coordinate scale sigma/sqrt(d)); the whole gradient is
rescaled when its norm exceeds G, so emitted gradients always satisfy the
bounded-gradient assumption.  Rescaling preserves direction but biases the
oracle while active; assumption-sensitive runs pick (sigma, G) so the clip
essentially never fires (``clip_count`` makes this auditable).
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ConfigError, InputDomainError, SadamError, UnsupportedQueryError
from .numerics import as_vector


def _cache_dir() -> Path:
    return Path(os.environ.get("SADAM_CACHE_DIR", "~/.cache/sadam")).expanduser()


class Problem:
    """Shared dimension/validation plumbing for the concrete objectives."""

    kind = "abstract"
    dim: int
    smoothness: float
    pl_lambda = None
    fstar = None
    # False when fstar approximates an unattained infimum (separable
    # logistic): iterates may then legitimately dip below the cached value.
    fstar_attained = True

    def _check(self, x) -> np.ndarray:
        x = as_vector(x, "x")
        if x.shape[0] != self.dim:
            raise InputDomainError(f"x has length {x.shape[0]}, expected {self.dim}")
        return x

    def eval(self, x) -> float:
        raise NotImplementedError

    def exact_grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def optimality_gap(self, x) -> float:
        if self.fstar is None:
            raise UnsupportedQueryError(f"{self.kind} has no known optimal value")
        gap = self.eval(x) - self.fstar
        if gap < -1e-12:
            raise SadamError(
                f"optimality gap {gap} < -1e-12: cached optimum for {self.kind} is stale"
            )
        return gap

    def spec(self) -> dict:
        raise NotImplementedError


class Quadratic(Problem):
    """f(x) = 0.5 * sum_j a_j x_j^2 with a given eigenvalue spectrum."""

    kind = "quadratic"

    def __init__(self, spectrum):
        a = as_vector(spectrum, "spectrum")
        if (a < 0.0).any():
            raise ConfigError("quadratic spectrum must be coordinatewise >= 0")
        self.a = a
        self.dim = a.shape[0]
        self.smoothness = float(a.max())
        self.pl_lambda = float(a.min()) if (a > 0.0).all() else None
        self.fstar = 0.0

    def eval(self, x) -> float:
        x = self._check(x)
        return 0.5 * float(np.dot(self.a * x, x))

    def exact_grad(self, x) -> np.ndarray:
        x = self._check(x)
        return self.a * x

    def spec(self) -> dict:
        return {"kind": "quadratic", "spectrum": self.a.tolist()}


class Rosenbrock(Problem):
    """Chained Rosenbrock: sum_i 100*(x_{i+1} - x_i^2)^2 + (1 - x_i)^2.

    Global minimum 0 at the all-ones point.  Not globally smooth; the
    ``smoothness`` attribute is an empirically certified constant over the
    standard [-2, 2]^d box (sampled once, deterministic).
    """

    kind = "rosenbrock"

    def __init__(self, dim: int = 2):
        if dim < 2:
            raise ConfigError(f"rosenbrock needs dim >= 2, got {dim}")
        self.dim = dim
        self.fstar = 0.0
        self._smoothness = None

    @property
    def smoothness(self) -> float:
        if self._smoothness is None:
            self._smoothness = 1.2 * empirical_smoothness(self, -2.0, 2.0, pairs=4000, seed=0)
        return self._smoothness

    def eval(self, x) -> float:
        x = self._check(x)
        a = x[:-1]
        b = x[1:]
        return float(np.sum(100.0 * (b - a * a) ** 2 + (1.0 - a) ** 2))

    def exact_grad(self, x) -> np.ndarray:
        x = self._check(x)
        g = np.zeros_like(x)
        a = x[:-1]
        b = x[1:]
        t = b - a * a
        g[:-1] += -400.0 * a * t - 2.0 * (1.0 - a)
        g[1:] += 200.0 * t
        return g

    def spec(self) -> dict:
        return {"kind": "rosenbrock", "dim": self.dim}


class Logistic(Problem):
    """Mean binary cross-entropy over the train split, with an optional ridge.

    Parameters are [w, b] (the bias is a folded constant feature), so
    dim = d_in + 1.  The optimal value is obtained once by deterministic
    full-gradient descent and cached in a sidecar file keyed by the dataset
    digest and the ridge coefficient.
    """

    kind = "logistic"

    def __init__(self, dataset: Dataset, l2: float = 0.0, fstar_cache=None):
        if dataset.num_classes != 2:
            raise ConfigError(f"logistic needs 2 classes, got {dataset.num_classes}")
        if l2 < 0.0:
            raise ConfigError(f"l2 must be >= 0, got {l2!r}")
        self.dataset = dataset
        self.l2 = float(l2)
        self.dim = dataset.d_in + 1
        tr = dataset.train_idx
        self._X = np.hstack([dataset.features[tr], np.ones((tr.size, 1))])
        self._y = np.where(dataset.labels[tr] == 1, 1.0, -1.0)
        te = dataset.test_idx
        self._X_test = np.hstack([dataset.features[te], np.ones((te.size, 1))])
        self._y_test = np.where(dataset.labels[te] == 1, 1.0, -1.0)
        # sigma''(z) <= 1/4 gives the exact curvature bound for the mean loss
        s = np.linalg.svd(self._X, compute_uv=False)[0]
        self.smoothness = float(s * s / (4.0 * self._X.shape[0]) + self.l2)
        self.fstar_attained = self.l2 > 0.0
        self._fstar_cache = fstar_cache
        self._fstar = None

    @property
    def n_train(self) -> int:
        return self._X.shape[0]

    @staticmethod
    def _log1pexp(z: np.ndarray) -> np.ndarray:
        out = np.empty_like(z)
        hi = z > 30.0
        lo = ~hi
        out[hi] = z[hi] + np.log1p(np.exp(-z[hi]))
        out[lo] = np.log1p(np.exp(z[lo]))
        return out

    def eval(self, x) -> float:
        x = self._check(x)
        margins = self._y * (self._X @ x)
        loss = float(np.mean(self._log1pexp(-margins)))
        if self.l2 > 0.0:
            loss += 0.5 * self.l2 * float(np.dot(x, x))
        return loss

    def minibatch_grad(self, x, indices) -> np.ndarray:
        x = self._check(x)
        X = self._X[indices]
        y = self._y[indices]
        z = y * (X @ x)
        s = np.empty_like(z)  # sigma(-z), branch-stable in both tails
        pos = z >= 0
        ez = np.exp(-z[pos])
        s[pos] = ez / (1.0 + ez)
        s[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
        g = -(X.T @ (y * s)) / X.shape[0]
        if self.l2 > 0.0:
            g += self.l2 * x
        return g

    def exact_grad(self, x) -> np.ndarray:
        return self.minibatch_grad(x, slice(None))

    def test_accuracy(self, x) -> float:
        x = self._check(x)
        if self._X_test.shape[0] == 0:
            raise UnsupportedQueryError("dataset has no test split")
        pred = np.sign(self._X_test @ x)
        return float(np.mean(pred * self._y_test > 0))

    @property
    def fstar(self):
        if self._fstar is None:
            self._fstar = self._compute_fstar()
        return self._fstar

    def _cache_path(self) -> Path:
        base = Path(self._fstar_cache) if self._fstar_cache else _cache_dir()
        return base / f"logistic_fstar_{self.dataset.hash[:24]}_l2_{self.l2!r}.json"

    def _compute_fstar(self, max_iters: int = 1_000_000, tol: float = 1e-12) -> float:
        path = self._cache_path()
        if path.exists():
            payload = json.loads(path.read_text())
            if payload.get("hash") == self.dataset.hash and payload.get("l2") == self.l2:
                return float(payload["fstar"])
        step = 1.0 / self.smoothness
        x = np.zeros(self.dim)
        g = self.exact_grad(x)
        for _ in range(max_iters):
            if float(np.linalg.norm(g)) <= tol:
                break
            x -= step * g
            g = self.exact_grad(x)
        fstar = self.eval(x)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps({"hash": self.dataset.hash, "l2": self.l2, "fstar": fstar})
        )
        return fstar

    def spec(self) -> dict:
        return {"kind": "logistic", "l2": self.l2, "dataset_hash": self.dataset.hash}


class MLP(Problem):
    """Two-layer tanh network with softmax cross-entropy, manual backprop.

    The parameter vector packs (W1, b1, W2, b2).  Small by design: large
    enough to be genuinely nonconvex, small enough to verify every gradient
    coordinate by finite differences.
    """

    kind = "mlp"
    MAX_HIDDEN = 64

    def __init__(self, dataset: Dataset, hidden: int = 8):
        if not (1 <= hidden <= self.MAX_HIDDEN):
            raise ConfigError(f"hidden units must be in [1, {self.MAX_HIDDEN}], got {hidden}")
        self.dataset = dataset
        self.hidden = hidden
        self.classes = dataset.num_classes
        if self.classes < 2:
            raise ConfigError("MLP needs at least 2 classes")
        d_in = dataset.d_in
        h, k = hidden, self.classes
        self._shapes = [(h, d_in), (h,), (k, h), (k,)]
        self._sizes = [h * d_in, h, k * h, k]
        self._offsets = np.cumsum([0] + self._sizes)
        self.dim = int(self._offsets[-1])
        tr = dataset.train_idx
        self._X = dataset.features[tr]
        self._labels = dataset.labels[tr]
        te = dataset.test_idx
        self._X_test = dataset.features[te]
        self._labels_test = dataset.labels[te]
        self._smoothness = None

    @property
    def n_train(self) -> int:
        return self._X.shape[0]

    @property
    def smoothness(self) -> float:
        if self._smoothness is None:
            self._smoothness = 1.2 * empirical_smoothness(self, -1.0, 1.0, pairs=2000, seed=0)
        return self._smoothness

    def _unpack(self, x: np.ndarray):
        parts = [
            x[self._offsets[i]:self._offsets[i + 1]].reshape(self._shapes[i])
            for i in range(4)
        ]
        return parts

    def _forward(self, x: np.ndarray, X: np.ndarray):
        W1, b1, W2, b2 = self._unpack(x)
        H = np.tanh(X @ W1.T + b1)
        logits = H @ W2.T + b2
        zmax = logits.max(axis=1, keepdims=True)
        shifted = logits - zmax
        logZ = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logZ
        return H, logp

    def eval(self, x) -> float:
        x = self._check(x)
        _, logp = self._forward(x, self._X)
        return -float(np.mean(logp[np.arange(self._X.shape[0]), self._labels]))

    def minibatch_grad(self, x, indices) -> np.ndarray:
        x = self._check(x)
        X = self._X[indices]
        labels = self._labels[indices]
        n = X.shape[0]
        W1, b1, W2, b2 = self._unpack(x)
        H, logp = self._forward(x, X)
        P = np.exp(logp)
        P[np.arange(n), labels] -= 1.0
        P /= n
        dW2 = P.T @ H
        db2 = P.sum(axis=0)
        dH = P @ W2
        dZ1 = dH * (1.0 - H * H)
        dW1 = dZ1.T @ X
        db1 = dZ1.sum(axis=0)
        return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])

    def exact_grad(self, x) -> np.ndarray:
        return self.minibatch_grad(x, slice(None))

    def test_accuracy(self, x) -> float:
        x = self._check(x)
        if self._X_test.shape[0] == 0:
            raise UnsupportedQueryError("dataset has no test split")
        _, logp = self._forward(x, self._X_test)
        return float(np.mean(logp.argmax(axis=1) == self._labels_test))

    def spec(self) -> dict:
        return {"kind": "mlp", "hidden": self.hidden, "dataset_hash": self.dataset.hash}


def empirical_smoothness(problem: Problem, low: float, high: float,
                         pairs: int = 2000, seed: int = 0) -> float:
    """Largest observed gradient Lipschitz ratio over random pairs in a box."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(pairs):
        x = rng.uniform(low, high, problem.dim)
        y = x + rng.standard_normal(problem.dim) * (high - low) * 0.01
        dx = float(np.linalg.norm(x - y))
        if dx == 0.0:
            continue
        dg = float(np.linalg.norm(problem.exact_grad(x) - problem.exact_grad(y)))
        best = max(best, dg / dx)
    return best


def finite_difference_grad(problem: Problem, x, h: float = 1e-5) -> np.ndarray:
    """Central finite differences; the independent check for exact_grad."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for j in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (problem.eval(xp) - problem.eval(xm)) / (2.0 * h)
    return g


class Oracle:
    """Stochastic gradient source enforcing the bounded-gradient/variance pair.

    mode "noise": exact gradient plus Gaussian noise of per-coordinate scale
    sigma/sqrt(d).  mode "minibatch": gradient of ``batch_size`` examples
    drawn uniformly with replacement (dataset problems only).  Either way the
    result is rescaled onto the ball ||g|| <= G when it lands outside.
    """

    def __init__(self, problem: Problem, G: float = math.inf, sigma: float = 0.0,
                 seed: int = 0, mode: str = "noise", batch_size: int | None = None):
        if not (G > 0.0):
            raise ConfigError(f"G must be > 0, got {G!r}")
        if not (math.isfinite(sigma) and sigma >= 0.0):
            raise ConfigError(f"sigma must be finite and >= 0, got {sigma!r}")
        if mode not in ("noise", "minibatch"):
            raise ConfigError(f"oracle mode must be 'noise' or 'minibatch', got {mode!r}")
        if mode == "minibatch":
            if not hasattr(problem, "minibatch_grad"):
                raise ConfigError(f"{problem.kind} has no mini-batch gradients")
            if not (isinstance(batch_size, int) and batch_size >= 1):
                raise ConfigError(f"minibatch mode needs batch_size >= 1, got {batch_size!r}")
        self.problem = problem
        self.G = float(G)
        self.sigma = float(sigma)
        self.seed = int(seed)
        self.mode = mode
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self.clip_count = 0
        self.calls = 0

    def stochastic_grad(self, x) -> np.ndarray:
        self.calls += 1
        if self.mode == "minibatch":
            idx = self.rng.integers(0, self.problem.n_train, size=self.batch_size)
            g = self.problem.minibatch_grad(x, idx)
        else:
            g = self.problem.exact_grad(x)
        if self.sigma > 0.0:
            d = g.shape[0]
            g = g + self.rng.standard_normal(d) * (self.sigma / math.sqrt(d))
        norm = float(np.linalg.norm(g))
        if norm > self.G:
            g = g * (self.G / norm)
            self.clip_count += 1
        return g

    def spec(self) -> dict:
        return {
            "G": None if math.isinf(self.G) else self.G,
            "sigma": self.sigma,
            "seed": self.seed,
            "mode": self.mode,
            "batch_size": self.batch_size,
        }
