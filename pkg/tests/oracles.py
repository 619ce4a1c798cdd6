"""Independent numerical oracles shared by the unit and acceptance tests."""

import numpy as np


def ks_against_cdf(draws, grid, cdf):
    """Kolmogorov-Smirnov distance between draws and a CDF tabulated on a grid."""
    x = np.sort(draws)
    f = np.interp(x, grid, cdf)
    i = np.arange(1, x.size + 1)
    return max(np.max(i / x.size - f), np.max(f - (i - 1) / x.size))


def grid_cdf(grid, logdens):
    """Trapezoid CDF of an unnormalized log density on a grid."""
    p = np.exp(logdens - np.max(logdens))
    c = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(grid))])
    return c / c[-1]


def tv_against_grid(draws, grid, logdens, bins=20):
    """Total variation between draws and a grid density over equal-mass bins of the latter."""
    cdf = grid_cdf(grid, logdens)
    edges = np.interp(np.linspace(0, 1, bins + 1), cdf, grid)
    edges[0], edges[-1] = -np.inf, np.inf
    emp = np.histogram(draws, edges)[0] / draws.size
    return 0.5 * np.abs(emp - 1.0 / bins).sum()
