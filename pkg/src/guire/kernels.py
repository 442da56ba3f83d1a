"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy fallback in ``_pykernels``. Set ``GUIRE_PURE_PYTHON=1`` to force the
fallback.
"""

from __future__ import annotations

import os

from guire import _pykernels

if os.environ.get("GUIRE_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from guire import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

dense_rewards = _impl.dense_rewards
sparse_rewards = _impl.sparse_rewards
masked_softmax = _impl.masked_softmax
accumulate_logprob_grad = _impl.accumulate_logprob_grad


def compiled():
    """The compiled module, or None when it is unavailable."""
    try:
        from guire import _ckernels
    except ImportError:
        return None
    return _ckernels
