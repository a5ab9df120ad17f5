"""Wiener-Poisson driving noise on a uniform time grid.

Two scenario modes share one interface:

* Tree: exact enumeration; per step the Brownian part takes +/- sqrt(h) per
  component (2^d sign combinations) and the jump part is categorical over
  (no jump, mark k) with P(mark k) = lambda_k * h.  Branch probabilities are
  products; conditional expectations are exact weighted averages.  Branches
  are ordered jump-major with sign combinations innermost so that martingale
  cancellations are exact in floating point.
* Monte Carlo: Gaussian increments and independent Bernoulli(lambda_k h) jump
  indicators, one counter-based RNG stream per path keyed by (seed, path
  index); the ensemble is identical for any parallelism degree.  Conditional
  expectations are least-squares regressions on polynomials of total degree
  <= 2 in the current state (W_t, jump counters), falling back to the
  minimum-norm degree-1 fit on rank deficiency.

Compensated jump increments are dnu_k = 1{jump k} - lambda_k h throughout.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from itertools import product

import numpy as np

TREE_LEAF_GUARD = 10_000_000


class NoiseModel:
    """Brownian dimension, finite mark set with intensities, uniform grid."""

    def __init__(self, brownian_dim, steps, horizon, marks=None, intensities=None):
        self.brownian_dim = int(brownian_dim)
        self.steps = int(steps)
        self.horizon = float(horizon)
        if self.brownian_dim < 1:
            raise ValueError("brownian_dim must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if marks is None:
            marks = np.zeros((0, 1))
            intensities = np.zeros(0)
        self.marks = np.atleast_2d(np.asarray(marks, dtype=float)) if np.size(marks) else np.zeros((0, 1))
        self.intensities = np.atleast_1d(np.asarray(intensities, dtype=float)) if intensities is not None else np.zeros(0)
        if self.marks.shape[0] != self.intensities.shape[0]:
            raise ValueError("need one intensity per mark")
        if self.marks.shape[0] and np.any(np.linalg.norm(self.marks, axis=1) == 0.0):
            raise ValueError("mark vectors must be nonzero")
        if np.any(self.intensities <= 0.0):
            raise ValueError("mark intensities must be positive")
        h = self.h
        lam_h = self.intensities * h
        if np.any(lam_h >= 1.0):
            raise ValueError("need lambda_k * h < 1 for the one-jump-per-step approximation")
        if lam_h.sum() > 0.5 + 1e-12:
            raise ValueError("need sum_k lambda_k * h <= 0.5")

    @property
    def h(self):
        return self.horizon / self.steps

    @property
    def n_marks(self):
        return self.marks.shape[0]

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.h


class TreeScenarios:
    """Exact scenario tree; nodes at level t are indexed so that the children
    of node i are i*B ... (i+1)*B-1 at level t+1."""

    mode = "tree"

    def __init__(self, model: NoiseModel):
        d, K, N = model.brownian_dim, model.n_marks, model.steps
        B = (2 ** d) * (1 + K)
        if B ** N > TREE_LEAF_GUARD:
            raise ValueError(
                f"tree size guard exceeded: (2^{d}*(1+{K}))^{N} = {B ** N} > {TREE_LEAF_GUARD}")
        self.model = model
        self.h = model.h
        self.n_steps = N
        self.times = model.times
        self.branching = B

        sqrt_h = np.sqrt(self.h)
        lam_h = model.intensities * self.h
        sign_combos = np.array(list(product((1.0, -1.0), repeat=d)))
        outcome_probs = np.concatenate([[1.0 - lam_h.sum()], lam_h])
        dw, jumps, probs = [], [], []
        for j in range(1 + K):
            onehot = np.zeros(K)
            if j > 0:
                onehot[j - 1] = 1.0
            for s in sign_combos:
                dw.append(s * sqrt_h)
                jumps.append(onehot)
                probs.append(outcome_probs[j] * (0.5 ** d))
        self.branch_dw = np.array(dw)          # (B, d)
        self.branch_jumps = np.array(jumps)    # (B, K)
        self.branch_probs = np.array(probs)    # (B,)
        self.branch_dnu = self.branch_jumps - lam_h[None, :]
        if abs(self.branch_probs.sum() - 1.0) > 1e-15:
            raise AssertionError("branch probabilities failed the exact-sum guard")

        self._w = [np.zeros((1, d))]
        self._counters = [np.zeros((1, K))]
        self._probs = [np.ones(1)]
        for _ in range(N):
            w = self._w[-1]
            c = self._counters[-1]
            p = self._probs[-1]
            n = w.shape[0]
            self._w.append(np.repeat(w, B, axis=0) + np.tile(self.branch_dw, (n, 1)))
            self._counters.append(np.repeat(c, B, axis=0) + np.tile(self.branch_jumps, (n, 1)))
            self._probs.append((p[:, None] * self.branch_probs[None, :]).ravel())
        self.n_leaves = B ** N
        self.node_count = sum(B ** t for t in range(N + 1))

    def n_nodes(self, t):
        return self._w[t].shape[0]

    def w_nodes(self, t):
        return self._w[t]

    def counters(self, t):
        return self._counters[t]

    def node_probs(self, t):
        return self._probs[t]

    def child_dw(self, t):
        return np.tile(self.branch_dw, (self.n_nodes(t), 1))

    def child_dnu(self, t):
        return np.tile(self.branch_dnu, (self.n_nodes(t), 1))

    def child_jumps(self, t):
        return np.tile(self.branch_jumps, (self.n_nodes(t), 1))

    def conditional_expectation(self, values, t):
        """Exact branch-probability average: values on level t+1 -> level t.

        Accumulates branches in ascending order so sign-symmetric cancellation
        is exact (the branch layout pairs +/- increments adjacently).
        """
        vals = np.asarray(values, dtype=float)
        n_child = self.n_nodes(t + 1)
        if vals.shape[0] != n_child:
            raise ValueError("values must cover every successor node")
        B = self.branching
        shaped = vals.reshape((self.n_nodes(t), B) + vals.shape[1:])
        out = self.branch_probs[0] * shaped[:, 0]
        for b in range(1, B):
            out = out + self.branch_probs[b] * shaped[:, b]
        return out

    def expand_to_leaves(self, values, t):
        """Broadcast node values at level t to their descendant leaves."""
        vals = np.asarray(values)
        reps = self.branching ** (self.n_steps - t)
        return np.repeat(vals, reps, axis=0)

    def push_to_children(self, values, t):
        """Copy level-t node values to each child at level t+1."""
        return np.repeat(np.asarray(values), self.branching, axis=0)

    def expectation(self, values, t):
        vals = np.asarray(values, dtype=float)
        return np.tensordot(self.node_probs(t), vals, axes=(0, 0))


class MonteCarloScenarios:
    """Seeded path ensemble with per-path counter-based streams."""

    mode = "mc"

    def __init__(self, model: NoiseModel, n_paths, seed, workers=1):
        if n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        self.model = model
        self.h = model.h
        self.n_steps = model.steps
        self.times = model.times
        self.n_paths = int(n_paths)
        self.seed = int(seed)
        d, K, N = model.brownian_dim, model.n_marks, model.steps
        lam_h = model.intensities * self.h

        dw = np.empty((self.n_paths, N, d))
        ind = np.empty((self.n_paths, N, K))
        sqrt_h = np.sqrt(self.h)

        def fill(lo, hi):
            for i in range(lo, hi):
                gen = np.random.Generator(np.random.Philox(key=(self.seed << 64) | i))
                dw[i] = gen.standard_normal((N, d)) * sqrt_h
                u = gen.random((N, K))
                ind[i] = (u < lam_h[None, :]).astype(float)

        workers = max(1, int(workers))
        if workers == 1:
            fill(0, self.n_paths)
        else:
            block = -(-self.n_paths // workers)
            spans = [(lo, min(lo + block, self.n_paths)) for lo in range(0, self.n_paths, block)]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(lambda span: fill(*span), spans))

        self._dw = dw
        self._jumps = ind
        self._dnu = ind - lam_h[None, None, :]
        self._w = np.zeros((N + 1, self.n_paths, d))
        self._w[1:] = np.cumsum(dw.swapaxes(0, 1), axis=0)
        self._counters = np.zeros((N + 1, self.n_paths, K))
        if K:
            self._counters[1:] = np.cumsum(ind.swapaxes(0, 1), axis=0)
        self.n_leaves = self.n_paths
        self.node_count = (N + 1) * self.n_paths

    def n_nodes(self, t):
        return self.n_paths

    def w_nodes(self, t):
        return self._w[t]

    def counters(self, t):
        return self._counters[t]

    def node_probs(self, t):
        return np.full(self.n_paths, 1.0 / self.n_paths)

    def child_dw(self, t):
        return self._dw[:, t, :]

    def child_dnu(self, t):
        return self._dnu[:, t, :]

    def child_jumps(self, t):
        return self._jumps[:, t, :]

    def _basis(self, t, degree):
        state = np.hstack([self._w[t], self._counters[t]])
        cols = [np.ones((self.n_paths, 1))]
        if degree >= 1:
            cols.append(state)
        if degree >= 2:
            p = state.shape[1]
            cols.extend(state[:, [i]] * state[:, [j]] for i in range(p) for j in range(i, p))
        return np.hstack(cols)

    def conditional_expectation(self, values, t):
        """Least-squares projection of next-step values onto the state basis."""
        vals = np.asarray(values, dtype=float)
        if vals.shape[0] != self.n_paths:
            raise ValueError("values must cover every path")
        flat = vals.reshape(self.n_paths, -1)
        if t == 0:
            fitted = np.broadcast_to(flat.mean(axis=0), flat.shape)
            return fitted.reshape(vals.shape).copy()
        phi = self._basis(t, 2)
        coef, _, rank, _ = np.linalg.lstsq(phi, flat, rcond=None)
        if rank < phi.shape[1]:
            # collinear quadratics: drop to degree 1; the minimum-norm solution
            # still yields the unique projection onto the basis span
            phi = self._basis(t, 1)
            coef, _, _, _ = np.linalg.lstsq(phi, flat, rcond=None)
        return (phi @ coef).reshape(vals.shape)

    def expand_to_leaves(self, values, t):
        return np.asarray(values)

    def push_to_children(self, values, t):
        return np.asarray(values)

    def expectation(self, values, t):
        return np.asarray(values, dtype=float).mean(axis=0)


def build_tree(model: NoiseModel) -> TreeScenarios:
    return TreeScenarios(model)


def sample_paths(model: NoiseModel, n_paths, seed, workers=1) -> MonteCarloScenarios:
    return MonteCarloScenarios(model, n_paths, seed, workers=workers)
