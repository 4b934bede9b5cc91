"""Idealized relative-cost model for fragment calculations.

A system of M = m * mu basis functions is split into m equal single kernels of
mu functions plus all (m^2 - m)/2 pairwise double kernels of 2 mu functions,
with the method cost scaling as size**alpha.  The relative time reduces to a
closed form independent of mu.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_M_VALUES = (3, 6, 12, 24, 48, 96, 192, 384)
DEFAULT_ALPHA_VALUES = (3.0, 4.0, 5.0)


@dataclass(frozen=True)
class CostQuery:
    m: int
    mu: int
    alpha: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError("m must be an integer >= 2")
        if int(self.mu) != self.mu or self.mu < 1:
            raise ValueError("mu must be a positive integer")
        if self.alpha < 1.0:
            raise ValueError("alpha must be >= 1")


def relative_time(m: int, alpha: float) -> float:
    """Closed form (2^(alpha-1) (m-1) + 1) / m^(alpha-1)."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if alpha < 1.0:
        raise ValueError("alpha must be >= 1")
    return (2.0 ** (alpha - 1.0) * (m - 1) + 1.0) / float(m) ** (alpha - 1.0)


def absolute_cost(basis_size: int, alpha: float) -> float:
    """Direct calculation cost basis_size**alpha, in arbitrary time units."""
    if basis_size < 1:
        raise ValueError("basis size must be positive")
    if alpha < 1.0:
        raise ValueError("alpha must be >= 1")
    return float(basis_size) ** alpha


def kem_absolute_cost(query: CostQuery, workers: int = 1) -> float:
    """m single kernels of mu functions plus (m^2 - m)/2 doubles of 2 mu.

    A perfectly parallel pool of workers divides the cost exactly.
    """
    if workers < 1:
        raise ValueError("workers must be positive")
    m, mu, alpha = query.m, float(query.mu), query.alpha
    total = m * mu**alpha + (m * (m - 1) / 2.0) * (2.0 * mu) ** alpha
    return total / workers


def relative_time_general(query: CostQuery) -> float:
    """Kernel-time sum over direct time for M = m * mu basis functions.

    Algebraically equal to relative_time(m, alpha) for every mu.
    """
    return kem_absolute_cost(query) / absolute_cost(query.m * query.mu, query.alpha)


def table_sweep(m_values, alpha_values) -> np.ndarray:
    """Relative-time grid: rows over m, columns over alpha."""
    return np.array(
        [[relative_time(m, alpha) for alpha in alpha_values] for m in m_values]
    )


def table_csv(m_values, alpha_values) -> str:
    """CSV rendering with header m,alpha=..., at full precision."""
    header = "m," + ",".join(f"alpha={a:g}" for a in alpha_values)
    lines = [header]
    for m in m_values:
        cells = [str(int(m))] + [f"{relative_time(m, a):.17g}" for a in alpha_values]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def plot_data_csv(m_values, alpha_values) -> str:
    """Long-format (alpha, m, t_rel) rows for external plotting."""
    lines = ["alpha,m,t_rel"]
    for alpha in alpha_values:
        for m in m_values:
            lines.append(f"{alpha:g},{int(m)},{relative_time(m, alpha):.17g}")
    return "\n".join(lines) + "\n"
