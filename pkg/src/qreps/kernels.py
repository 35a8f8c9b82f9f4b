"""Backend selection for the inner saddle-point loop.

The compiled extension is used when it imports; otherwise the NumPy
implementation runs. Set ``QREPS_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernel_py
from ._kernel_py import exact_gradient, sampled_gradient

__all__ = ["BACKEND", "available_backends", "run_inner", "sampled_gradient", "exact_gradient"]

_IMPLS = {"python": _kernel_py.run_inner}
try:
    from . import _kernel
except ImportError:  # extension not built
    _kernel = None
else:
    _IMPLS["compiled"] = _kernel.run_inner

_requested = os.environ.get("QREPS_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "compiled"):
    raise ImportError(f"QREPS_BACKEND must be 'python' or 'compiled', got {_requested!r}")
if _requested == "compiled" and _kernel is None:
    raise ImportError("QREPS_BACKEND=compiled but the extension is not built")
BACKEND = _requested or ("compiled" if _kernel is not None else "python")

_LEARNERS = {"sgd": _kernel_py.SGD, "adam": _kernel_py.ADAM}
_SAMPLERS = {"eg": _kernel_py.EG, "br": _kernel_py.BR, "uniform": _kernel_py.UNIFORM}
_MODES = {"sampled": _kernel_py.SAMPLED, "exact": _kernel_py.EXACT}


def available_backends() -> list[str]:
    return sorted(_IMPLS)


def run_inner(pb, theta0, cfg, uniforms, backend=None):
    impl = _IMPLS[backend or BACKEND]
    return impl(
        pb,
        theta0,
        int(cfg.steps),
        float(cfg.beta),
        float(cfg.beta_prime),
        _LEARNERS[cfg.learner],
        _SAMPLERS[cfg.sampler],
        _MODES[cfg.grad_mode],
        uniforms,
        float(cfg.adam_b1),
        float(cfg.adam_b2),
        float(cfg.adam_eps),
    )
