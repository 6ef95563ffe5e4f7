"""Hot numeric kernels, JIT-compiled with numba when available.

Two inner loops dominate runtime in this package: full-batch gradient-descent
training of the shallow networks (thousands of fits during pool training,
per-fold retraining, and repeated stability runs) and the neighbor
accumulation loop of the relief-style feature ranker.  Both are written once
as plain numpy functions; when numba is importable the same bodies are
compiled with ``@njit``, otherwise they run as ordinary Python.

Set ``TEAYIELD_DISABLE_NUMBA=1`` in the environment to force the pure-numpy
interpreters (slower, but useful for debugging and on platforms where numba
is unavailable).  Both paths execute the identical statements, so they agree
up to floating-point rounding inside the underlying BLAS calls.  Kernels are
single-threaded on purpose: results never depend on thread count.

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("TEAYIELD_DISABLE_NUMBA", "").strip() not in ("", "0")

if not _DISABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _DISABLED = True

if _DISABLED:
    def _jit(fn):
        return fn
else:
    def _jit(fn):
        return _njit(cache=True, fastmath=False)(fn)


def numba_enabled() -> bool:
    return not _DISABLED


def backend() -> str:
    return "numpy" if _DISABLED else "numba"


# ---------------------------------------------------------------------------
# Shallow network: one tanh hidden layer, identity output, MSE loss.
# ---------------------------------------------------------------------------

def _mlp_forward_impl(X, W1, b1, w2, b2):
    A1 = np.tanh(np.dot(X, W1) + b1)
    return np.dot(A1, w2) + b2


def _mlp_loss_grads_impl(X, y, W1, b1, w2, b2):
    # Mean-squared-error loss and its exact gradients via backpropagation.
    n = X.shape[0]
    A1 = np.tanh(np.dot(X, W1) + b1)
    err = np.dot(A1, w2) + b2 - y
    loss = (err * err).mean()
    dout = (2.0 / n) * err
    gw2 = np.dot(A1.T, dout)
    gb2 = dout.sum()
    dZ1 = np.outer(dout, w2) * (1.0 - A1 * A1)
    gW1 = np.dot(X.T, dZ1)
    gb1 = dZ1.sum(axis=0)
    return loss, gW1, gb1, gw2, gb2


def _mlp_train_impl(X, y, Xv, yv, W1, b1, w2, b2, lr, max_epochs, patience):
    """Full-batch gradient descent with optional early stopping.

    ``Xv``/``yv`` hold the held-out shard; pass zero rows to disable early
    stopping and run all epochs.  Returns the trained parameters, the
    per-epoch training losses, the number of epochs run, and a status flag
    (0 ok, -1 the loss went non-finite at the last recorded epoch).
    When early stopping is active the parameters with the best shard loss
    are restored at the end.
    """
    W1 = W1.copy()
    b1 = b1.copy()
    w2 = w2.copy()
    b2s = b2
    use_val = Xv.shape[0] > 0
    bW1 = W1.copy()
    bb1 = b1.copy()
    bw2 = w2.copy()
    bb2 = b2s
    best_val = np.inf
    bad = 0
    losses = np.empty(max_epochs)
    n_run = 0
    for epoch in range(max_epochs):
        # mlp_loss_grads / mlp_forward resolve to the jitted versions when
        # numba is active, so the whole loop stays inside compiled code.
        loss, gW1, gb1, gw2, gb2 = mlp_loss_grads(X, y, W1, b1, w2, b2s)
        losses[epoch] = loss
        n_run = epoch + 1
        if not np.isfinite(loss):
            return W1, b1, w2, b2s, losses[:n_run], n_run, -1
        W1 -= lr * gW1
        b1 -= lr * gb1
        w2 -= lr * gw2
        b2s -= lr * gb2
        if use_val:
            verr = mlp_forward(Xv, W1, b1, w2, b2s) - yv
            vloss = (verr * verr).mean()
            if vloss < best_val:
                best_val = vloss
                bW1[:] = W1
                bb1[:] = b1
                bw2[:] = w2
                bb2 = b2s
                bad = 0
            else:
                bad += 1
                if bad >= patience:
                    break
    if use_val:
        return bW1, bb1, bw2, bb2, losses[:n_run], n_run, 0
    return W1, b1, w2, b2s, losses[:n_run], n_run, 0


# ---------------------------------------------------------------------------
# Relief-style accumulation for regression.
# ---------------------------------------------------------------------------

def _relief_accumulate_impl(Xn, yn, sample_idx, k, rank_w):
    """Accumulate the three relief statistics over sampled instances.

    ``Xn`` and ``yn`` are range-normalized, so per-feature value diffs and
    the target diff are already in [0, 1] and the Manhattan distance is the
    plain sum of feature diffs.  ``rank_w`` holds the k neighbor influence
    weights (summing to 1).  Distance ties resolve toward the lower row
    index, which keeps both backends bit-for-bit aligned.
    """
    n, f = Xn.shape
    ndc = 0.0
    nda = np.zeros(f)
    ndcda = np.zeros(f)
    for s in range(sample_idx.shape[0]):
        i = sample_idx[s]
        dist = np.abs(Xn - Xn[i]).sum(axis=1)
        best_d = np.full(k, np.inf)
        best_j = np.full(k, -1, dtype=np.int64)
        for j in range(n):
            if j == i:
                continue
            d = dist[j]
            if d < best_d[k - 1]:
                pos = k - 1
                while pos > 0 and best_d[pos - 1] > d:
                    best_d[pos] = best_d[pos - 1]
                    best_j[pos] = best_j[pos - 1]
                    pos -= 1
                best_d[pos] = d
                best_j[pos] = j
        for r in range(k):
            j = best_j[r]
            w = rank_w[r]
            dy = abs(yn[i] - yn[j])
            ndc += w * dy
            for a in range(f):
                da = abs(Xn[i, a] - Xn[j, a])
                nda[a] += w * da
                ndcda[a] += w * da * dy
    return ndc, nda, ndcda


mlp_forward = _jit(_mlp_forward_impl)
mlp_loss_grads = _jit(_mlp_loss_grads_impl)
mlp_train = _jit(_mlp_train_impl)
relief_accumulate = _jit(_relief_accumulate_impl)
