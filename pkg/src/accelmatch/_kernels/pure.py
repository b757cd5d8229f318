"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via
``ACCELMATCH_BACKEND=python``).  Semantics must match ``_fast.pyx`` exactly:
tie-breaks, tolerances, everything except floating-point summation order.
"""

import numpy as np
from scipy.special import log_ndtr

BACKEND_NAME = "python"


def greedy_assign(u, quotas):
    """Assign startups to accelerators by repeatedly taking the largest
    remaining pair value among accelerators with spare capacity.

    Ties are broken by (accelerator index, startup index), which a stable
    descending sort of the row-major flattened matrix delivers for free.

    Parameters
    ----------
    u : (A, S) float64
        Total pair values (deterministic part plus noise).
    quotas : (A,) int64

    Returns
    -------
    (S,) int64 accelerator index per startup.
    """
    A, S = u.shape
    order = np.argsort(-u.ravel(), kind="stable")
    assign = np.full(S, -1, dtype=np.int64)
    spare = np.asarray(quotas, dtype=np.int64).copy()
    placed = 0
    for idx in order:
        a, s = divmod(int(idx), S)
        if assign[s] >= 0 or spare[a] == 0:
            continue
        assign[s] = a
        spare[a] -= 1
        placed += 1
        if placed == S:
            break
    return assign


def greedy_assign_batch(ubar, quotas, eps):
    """Vectorized greedy assignment for a batch of noise draws.

    Runs S rounds; each round matches exactly one startup per draw (the
    current feasible argmax), so the whole batch advances in lockstep with
    one masked argmax per round.

    Parameters
    ----------
    ubar : (A, S) float64
    quotas : (A,) int64
    eps : (T, A, S) float64

    Returns
    -------
    (T, S) int64
    """
    T = eps.shape[0]
    A, S = ubar.shape
    live = (ubar[None, :, :] + eps).reshape(T, A * S).copy()
    assign = np.full((T, S), -1, dtype=np.int64)
    spare = np.tile(np.asarray(quotas, dtype=np.int64), (T, 1))
    rows = np.arange(T)
    acc_offsets = np.arange(A) * S
    col_range = np.arange(S)
    for _ in range(S):
        idx = np.argmax(live, axis=1)  # first max: (a, s) lexicographic
        a, s = np.divmod(idx, S)
        assign[rows, s] = a
        # startup s is matched: mask its column in every accelerator row
        live[rows[:, None], acc_offsets[None, :] + s[:, None]] = -np.inf
        spare[rows, a] -= 1
        filled = np.nonzero(spare[rows, a] == 0)[0]
        if filled.size:
            live[filled[:, None], a[filled][:, None] * S + col_range[None, :]] = -np.inf
    return assign


def stability_logprob_batch(ubar, assign, eps_matched):
    """Log-probability that no unmatched pair blocks, per noise draw.

    For each draw t the matched pair values are
    ``um[t, s] = ubar[assign[s], s] + eps_matched[t, s]``; an unmatched pair
    (a, s) stays passive when its own noise falls below
    ``max(um[t, s], min_{s' in a's cohort} um[t, s']) - ubar[a, s]``,
    which happens with probability Phi(threshold).

    Parameters
    ----------
    ubar : (A, S) float64
    assign : (S,) int64
    eps_matched : (T, S) float64

    Returns
    -------
    (T,) float64 sums of log Phi over unmatched pairs (0.0 if none).
    """
    T = eps_matched.shape[0]
    A, S = ubar.shape
    s_idx = np.arange(S)
    um = ubar[assign, s_idx][None, :] + eps_matched  # (T, S)
    mins = np.empty((T, A))
    for a in range(A):
        mins[:, a] = um[:, assign == a].min(axis=1)
    a_un, s_un = np.nonzero(assign[None, :] != np.arange(A)[:, None])
    if a_un.size == 0:
        return np.zeros(T)
    thr = np.maximum(um[:, s_un], mins[:, a_un]) - ubar[a_un, s_un][None, :]
    return log_ndtr(thr).sum(axis=1)


def log_phi(x):
    """Elementwise log Phi (scipy's implementation)."""
    return log_ndtr(np.asarray(x, dtype=np.float64))


def stability_logprob_multi(
    ubar_matched, assign_global, draws, pair_a, pair_s, pair_ubar, pair_offsets, n_acc_total
):
    """Per-draw log stability probabilities for several markets at once.

    Same contract as the compiled version: startups and accelerators carry
    global indices, unmatched pairs are grouped per market by
    ``pair_offsets``.  Returns (n_markets, T).
    """
    T = draws.shape[0]
    K = len(pair_offsets) - 1
    um = ubar_matched[None, :] + draws  # (T, S_total)
    mins = np.empty((T, n_acc_total))
    for a in range(n_acc_total):
        members = assign_global == a
        if members.any():
            mins[:, a] = um[:, members].min(axis=1)
        else:
            mins[:, a] = np.inf
    g = np.zeros((K, T))
    if len(pair_a) == 0:
        return g
    thr = np.maximum(um[:, pair_s], mins[:, pair_a]) - pair_ubar[None, :]
    lp = log_ndtr(thr)
    for k in range(K):
        lo, hi = pair_offsets[k], pair_offsets[k + 1]
        if hi > lo:
            g[k] = lp[:, lo:hi].sum(axis=1)
    return g
