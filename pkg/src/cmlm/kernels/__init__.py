"""Kernel backend selection.

The compiled extension is used when available; the pure numpy module is the
fallback. Set CMLM_KERNELS=pure or CMLM_KERNELS=compiled to force a choice
(forcing "compiled" fails loudly if the extension is missing).
"""
from __future__ import annotations

import os

from . import pure as _pure

_requested = os.environ.get("CMLM_KERNELS", "").strip().lower()

if _requested == "pure":
    _impl = _pure
elif _requested == "compiled":
    from . import _core as _impl
elif _requested == "":
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _pure
else:
    raise ImportError(f"CMLM_KERNELS={_requested!r} is not 'pure' or 'compiled'")

BACKEND = _impl.NAME
softmax_xent_fwbw = _impl.softmax_xent_fwbw
layernorm_fw = _impl.layernorm_fw
layernorm_bw = _impl.layernorm_bw
gelu_fw = _impl.gelu_fw
gelu_bw = _impl.gelu_bw
causal_softmax_fw = _impl.causal_softmax_fw
causal_softmax_bw = _impl.causal_softmax_bw
adam_step = _impl.adam_step

__all__ = [
    "BACKEND", "softmax_xent_fwbw", "layernorm_fw", "layernorm_bw",
    "gelu_fw", "gelu_bw", "causal_softmax_fw", "causal_softmax_bw",
    "adam_step",
]
