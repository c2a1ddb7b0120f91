"""Manufactured solutions for the Poisson problem -div grad u = f."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

pi = np.pi


@dataclass(frozen=True)
class ExactSolution:
    """Exact solution with derivatives, load ``f = -lap u`` and boundary data ``g``.

    ``grad`` returns ``(ux, uy)`` and ``hess`` returns ``(uxx, uxy, uyy)``.
    ``g`` is ``None`` when the boundary data vanish.
    """

    name: str
    u: Callable
    grad: Callable
    hess: Callable
    f: Callable
    g: Optional[Callable] = None


def _sinsin() -> ExactSolution:
    def u(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def grad(x, y):
        return pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)

    def hess(x, y):
        sxy = np.sin(pi * x) * np.sin(pi * y)
        return -(pi**2) * sxy, pi**2 * np.cos(pi * x) * np.cos(pi * y), -(pi**2) * sxy

    def f(x, y):
        return 2 * pi**2 * np.sin(pi * x) * np.sin(pi * y)

    return ExactSolution("sinsin", u, grad, hess, f, None)


def _poly_patch() -> ExactSolution:
    def u(x, y):
        return x**2 + y**2

    def grad(x, y):
        return 2 * x, 2 * y

    def hess(x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return z + 2.0, z, z + 2.0

    def f(x, y):
        return np.full(np.broadcast(x, y).shape, -4.0)

    return ExactSolution("poly-patch", u, grad, hess, f, u)


def _linear() -> ExactSolution:
    def u(x, y):
        return x + y

    def grad(x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return z + 1.0, z + 1.0

    def hess(x, y):
        z = np.zeros(np.broadcast(x, y).shape)
        return z, z, z

    def f(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    return ExactSolution("linear", u, grad, hess, f, u)


PROBLEMS = {"sinsin": _sinsin, "poly-patch": _poly_patch, "linear": _linear}


def get_problem(name: str) -> ExactSolution:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def unit_load(x, y):
    return np.ones(np.broadcast(x, y).shape)
