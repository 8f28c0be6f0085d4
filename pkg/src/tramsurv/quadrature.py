"""Composite Simpson quadrature with grid-doubling convergence control."""

import numpy as np

from .errors import QuadratureNonConvergence


def simpson(fn, a: float, b: float, panels: int) -> float:
    """Composite Simpson estimate of the integral of fn over [a, b]."""
    if panels < 2 or panels % 2:
        raise ValueError("Simpson's rule needs an even number of panels")
    if b <= a:
        return 0.0
    nodes = np.linspace(a, b, panels + 1)
    values = np.asarray(fn(nodes), dtype=float)
    h = (b - a) / panels
    return (
        h
        / 3.0
        * float(
            values[0]
            + values[-1]
            + 4.0 * np.sum(values[1:-1:2])
            + 2.0 * np.sum(values[2:-1:2])
        )
    )


def simpson_doubling(
    fn,
    a: float,
    b: float,
    rel_tol: float = 1e-7,
    base_panels: int = 512,
    max_panels: int = 8192,
) -> float:
    """Simpson quadrature, doubling the grid until successive estimates agree.

    Raises :class:`QuadratureNonConvergence` if the finest grid still
    disagrees with its predecessor by more than ``rel_tol`` relatively (with a
    tiny absolute floor, so exactly-zero integrals converge immediately).
    """
    if b <= a:
        return 0.0
    panels = base_panels
    previous = simpson(fn, a, b, panels)
    while panels < max_panels:
        panels *= 2
        current = simpson(fn, a, b, panels)
        if abs(current - previous) <= max(rel_tol * abs(current), 1e-15):
            return current
        previous = current
    raise QuadratureNonConvergence(
        f"Simpson grids of {max_panels // 2} and {max_panels} panels still "
        f"disagree beyond relative tolerance {rel_tol}"
    )
