"""Kernel backend selection.

The hot kernels exist twice: a compiled extension (``tgifa._kernels``) and
a pure-NumPy fallback (``tgifa._kernels_py``). ``TGIFA_BACKEND`` picks one:

- ``auto`` (default): compiled if the extension built, else python
- ``compiled``: require the extension, raise if missing
- ``python``: force the fallback

Both backends consume randomness identically (callers pre-draw it), so a
run is reproducible within a backend; across backends results agree to
floating-point rounding.
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def available_backends() -> tuple[str, ...]:
    return ("python", "compiled") if _kernels_c is not None else ("python",)


def resolve_backend(name: str | None = None) -> str:
    name = name or os.environ.get("TGIFA_BACKEND", "auto")
    if name == "auto":
        return "compiled" if _kernels_c is not None else "python"
    if name == "compiled":
        if _kernels_c is None:
            raise RuntimeError(
                "compiled backend requested but the tgifa._kernels extension "
                "is not built; install with the C extension or set "
                "TGIFA_BACKEND=python"
            )
        return "compiled"
    if name == "python":
        return "python"
    raise ValueError(f"unknown backend {name!r}; expected auto, compiled or python")


def get_kernels(name: str | None = None):
    resolved = resolve_backend(name)
    return (_kernels_c if resolved == "compiled" else _kernels_py), resolved
