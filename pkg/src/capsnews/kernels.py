"""Hot numeric kernels with a compiled fast path.

The convolution and pooling inner loops dominate training time, so they come
in two interchangeable implementations: a Cython extension
(``capsnews._ckernels``) and the pure-numpy versions in this module.  The
compiled backend is picked at import time when the extension was built;
``CAPSNEWS_KERNELS=python`` or ``=c`` forces a choice.  ``benchmarks/`` holds
a script comparing the two.

All kernels take and return C-contiguous float64 arrays.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _np_conv1d_forward(x, w, b):
    # out[t, k] = b[k] + sum_{i,d} x[t+i, d] * w[k, i, d]
    windows = sliding_window_view(x, w.shape[1], axis=0)  # (T, D, S)
    out = np.tensordot(windows, w, axes=((1, 2), (2, 1))) + b
    return np.ascontiguousarray(out)


def _np_conv1d_backward(x, w, gout):
    S = w.shape[1]
    T = gout.shape[0]
    gb = gout.sum(axis=0)
    windows = sliding_window_view(x, S, axis=0)            # (T, D, S)
    gw = np.tensordot(gout, windows, axes=(0, 0))          # (K, D, S)
    gw = np.ascontiguousarray(gw.transpose(0, 2, 1))       # (K, S, D)
    gx = np.zeros_like(x)
    spread = np.tensordot(gout, w, axes=(1, 0))            # (T, S, D)
    for i in range(S):
        gx[i:i + T] += spread[:, i, :]
    return gx, gw, gb


def _np_maxpool_forward(x):
    idx = np.argmax(x, axis=0)  # first occurrence on ties
    out = x[idx, np.arange(x.shape[1])]
    return np.ascontiguousarray(out), idx.astype(np.int64)


_PYTHON = {
    "conv1d_forward": _np_conv1d_forward,
    "conv1d_backward": _np_conv1d_backward,
    "maxpool_forward": _np_maxpool_forward,
}

try:
    from capsnews import _ckernels as _cext
except ImportError:
    _cext = None


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _c_conv1d_forward(x, w, b):
    return _cext.conv1d_forward(_contig(x), _contig(w), _contig(b))


def _c_conv1d_backward(x, w, gout):
    return _cext.conv1d_backward(_contig(x), _contig(w), _contig(gout))


def _c_maxpool_forward(x):
    return _cext.maxpool_forward(_contig(x))


_COMPILED = None
if _cext is not None:
    _COMPILED = {
        "conv1d_forward": _c_conv1d_forward,
        "conv1d_backward": _c_conv1d_backward,
        "maxpool_forward": _c_maxpool_forward,
    }


def available_backends():
    """Mapping backend name -> kernel table, for tests and benchmarks."""
    table = {"python": _PYTHON}
    if _COMPILED is not None:
        table["c"] = _COMPILED
    return table


_forced = os.environ.get("CAPSNEWS_KERNELS", "").strip().lower()
if _forced == "python":
    _active = _PYTHON
    BACKEND = "python"
elif _forced == "c":
    if _COMPILED is None:
        raise ImportError("CAPSNEWS_KERNELS=c but the compiled kernels are not built")
    _active = _COMPILED
    BACKEND = "c"
elif _COMPILED is not None:
    _active = _COMPILED
    BACKEND = "c"
else:
    _active = _PYTHON
    BACKEND = "python"

conv1d_forward = _active["conv1d_forward"]
conv1d_backward = _active["conv1d_backward"]
maxpool_forward = _active["maxpool_forward"]
