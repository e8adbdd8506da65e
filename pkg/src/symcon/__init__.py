"""Symbolic execution and modular contract verification for an untyped
functional core language with higher-order behavioral contracts."""

import sys as _sys

# Term-model states are whole expressions; structural operations recurse over
# them and legitimately reach depths in the thousands.
if _sys.getrecursionlimit() < 100_000:
    _sys.setrecursionlimit(100_000)

from .lang import parse_program, check_wellformed, classify_contract  # noqa: F401,E402
from .reduce import eval_term, step  # noqa: F401,E402

__all__ = ["parse_program", "check_wellformed", "classify_contract",
           "eval_term", "step"]
