"""Kernel backend selection.

The compiled extension is preferred when importable; ``ACCELMATCH_BACKEND``
(``cython`` / ``python`` / ``auto``) overrides.  All callers go through the
wrappers below, which coerce dtypes and layouts so both backends see
identical inputs.
"""

import os

import numpy as np

from ..errors import ConfigurationError

_requested = os.environ.get("ACCELMATCH_BACKEND", "auto").strip().lower()

if _requested in ("", "auto"):
    try:
        from . import _fast as _impl
    except ImportError:
        from . import pure as _impl
elif _requested == "cython":
    from . import _fast as _impl
elif _requested == "python":
    from . import pure as _impl
else:
    raise ConfigurationError(
        f"ACCELMATCH_BACKEND must be 'auto', 'cython' or 'python', got {_requested!r}"
    )

BACKEND = _impl.BACKEND_NAME


def _f64(x, ndim):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ConfigurationError(f"expected a {ndim}-d array, got {arr.ndim}-d")
    return arr


def _i64(x):
    return np.ascontiguousarray(x, dtype=np.int64)


def greedy_assign(u, quotas):
    return _impl.greedy_assign(_f64(u, 2), _i64(quotas))


def greedy_assign_batch(ubar, quotas, eps):
    return _impl.greedy_assign_batch(_f64(ubar, 2), _i64(quotas), _f64(eps, 3))


def stability_logprob_batch(ubar, assign, eps_matched):
    return _impl.stability_logprob_batch(_f64(ubar, 2), _i64(assign), _f64(eps_matched, 2))


def stability_logprob_multi(
    ubar_matched, assign_global, draws, pair_a, pair_s, pair_ubar, pair_offsets, n_acc_total
):
    return _impl.stability_logprob_multi(
        _f64(ubar_matched, 1),
        _i64(assign_global),
        _f64(draws, 2),
        _i64(pair_a),
        _i64(pair_s),
        _f64(pair_ubar, 1),
        _i64(pair_offsets),
        int(n_acc_total),
    )


def log_phi(x):
    return _impl.log_phi(x)
