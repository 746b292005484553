"""Built-in verification problems."""
import numpy as np

from .analysis import ExactSolution
from .system import build_system


def scalar_system():
    """``u'' + 5 u' + 6 u = 0`` with ``u(0) = 2``, ``u'(0) = -5``."""
    return build_system([[1.0]], [[5.0]], [[6.0]], None, [2.0], [-5.0])


def scalar_exact():
    """``u = exp(-3t) + exp(-2t)`` and its derivative ``w = -3 exp(-3t) - 2 exp(-2t)``.

    The printed velocity ``-3 exp(-3t) - 3 exp(-2t)`` is not the derivative of
    ``u`` and gives ``w(0) = -6``; the consistent form is used.
    """
    return ExactSolution(
        lambda t: np.array([np.exp(-3.0 * t) + np.exp(-2.0 * t)]),
        lambda t: np.array([-3.0 * np.exp(-3.0 * t) - 2.0 * np.exp(-2.0 * t)]),
    )
