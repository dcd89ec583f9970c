"""Bradley-Terry maximum likelihood over the aggregate win-count matrix.

Fitting uses the minorization-maximization fixed point

    p_i <- W_i / sum_{j != i} N_ij / (p_i + p_j)

where W_i is candidate i's total wins and N_ij = n_ij + n_ji.  Each update
cannot decrease the log-likelihood, and rescaling p leaves the likelihood
unchanged, so renormalizing to sum 1 after every step is free.

Derivatives are taken with respect to log-strengths theta = ln p, where the
likelihood is concave and invariant to adding a constant to every theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.sparse.csgraph import connected_components

from ._kernels import mm_solve, strongly_connected
from .core import DimensionError


class NonIdentifiableError(ValueError):
    """The comparison graph is not strongly connected, so no finite MLE exists."""

    def __init__(self, report: "ConnectivityReport"):
        self.report = report
        groups = "; ".join("{" + ",".join(map(str, c)) + "}" for c in report.components)
        super().__init__(
            f"comparison graph is not strongly connected; components: {groups}"
            f" (sinks: {list(report.sinks)}, sources: {list(report.sources)})"
        )


@dataclass(frozen=True)
class FitConfig:
    tol: float = 1e-8
    max_iters: int = 10_000
    regularization: float = 0.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.regularization < 0:
            raise ValueError("regularization must be non-negative")


@dataclass(frozen=True)
class FitResult:
    strengths: np.ndarray = field(repr=False)
    log_likelihood: float
    iterations: int
    converged: bool
    last_change: float

    def __eq__(self, other):
        if not isinstance(other, FitResult):
            return NotImplemented
        return (
            np.array_equal(self.strengths, other.strengths)
            and self.log_likelihood == other.log_likelihood
            and self.iterations == other.iterations
            and self.converged == other.converged
            and self.last_change == other.last_change
        )


@dataclass(frozen=True)
class ConnectivityReport:
    strongly_connected: bool
    # strongly connected components, in topological order of the condensation
    components: tuple[tuple[int, ...], ...]
    # components with no edge leaving them (their members beat nobody outside)
    sinks: tuple[tuple[int, ...], ...]
    # components nobody outside ever beats
    sources: tuple[tuple[int, ...], ...]


def _counts(counts) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"count matrix must be square, got shape {c.shape}")
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    if np.any(np.diag(c) != 0):
        raise ValueError("count matrix must have a zero diagonal")
    return c


def _pair(counts, p) -> tuple[np.ndarray, np.ndarray]:
    c = _counts(counts)
    p = np.asarray(p, dtype=float)
    if p.shape != (c.shape[0],):
        raise DimensionError(f"strengths have shape {p.shape}, counts are {c.shape}")
    if np.any(p <= 0):
        raise ValueError("strengths must be positive")
    return c, p


def _loglik(c: np.ndarray, p: np.ndarray) -> float:
    # n_ij ln(p_i / (p_i + p_j)) over every ordered pair covers both terms of
    # each unordered pair
    return float((c * np.log(p[:, None] / np.add.outer(p, p))).sum())


def log_likelihood(counts, p) -> float:
    c, p = _pair(counts, p)
    return _loglik(c, p)


def gradient(counts, p) -> np.ndarray:
    c, p = _pair(counts, p)
    totals = c + c.T
    expected = totals * (p[:, None] / (p[:, None] + p[None, :]))
    return c.sum(axis=1) - expected.sum(axis=1)


def hessian(counts, p) -> np.ndarray:
    c, p = _pair(counts, p)
    totals = c + c.T
    s = p[:, None] + p[None, :]
    h = totals * np.outer(p, p) / (s * s)
    np.fill_diagonal(h, 0.0)
    h[np.diag_indices_from(h)] = -h.sum(axis=1)
    return h


def check_connectivity(counts) -> ConnectivityReport:
    c = _counts(counts)
    adj = c > 0
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    groups = [tuple(np.flatnonzero(labels == k).tolist()) for k in range(n_comp)]
    # condensation edges
    out_edges = np.zeros((n_comp, n_comp), dtype=bool)
    src, dst = np.nonzero(adj)
    out_edges[labels[src], labels[dst]] = True
    np.fill_diagonal(out_edges, False)
    # topological order: sort components by how many others can reach them
    reach = out_edges.copy()
    for k in range(n_comp):
        reach |= reach[:, [k]] & reach[[k], :]
    order = sorted(range(n_comp), key=lambda k: (reach[:, k].sum(), min(groups[k])))
    comps = tuple(groups[k] for k in order)
    sinks = tuple(groups[k] for k in order if n_comp > 1 and not out_edges[k].any())
    sources = tuple(groups[k] for k in order if n_comp > 1 and not out_edges[:, k].any())
    return ConnectivityReport(n_comp == 1, comps, sinks, sources)


def _prepared(counts, regularization: float) -> np.ndarray:
    c = _counts(counts)
    if regularization:
        c = c + regularization * (1.0 - np.eye(c.shape[0]))
    return c


def mm_iterates(counts, p0=None, regularization: float = 0.0) -> Iterator[tuple[np.ndarray, float]]:
    """Yield ``(p, max_abs_change)`` after each MM update, forever.

    No connectivity check is made; callers that need one should use ``fit``.
    """
    c = _prepared(counts, regularization)
    m = c.shape[0]
    wins = c.sum(axis=1)
    totals = c + c.T
    p = np.full(m, 1.0 / m) if p0 is None else np.asarray(p0, dtype=float) / np.sum(p0)
    while True:
        denom = (totals / (p[:, None] + p[None, :])).sum(axis=1)
        new = wins / denom
        new /= new.sum()
        change = float(np.max(np.abs(new - p)))
        p = new
        yield p, change


def fit(counts, config: FitConfig | None = None, init=None) -> FitResult:
    """Fit Bradley-Terry strengths by MM, starting from uniform or ``init``.

    Raises NonIdentifiableError when the (regularized) comparison graph is not
    strongly connected.  Hitting ``max_iters`` is reported through
    ``converged=False`` rather than an exception.
    """
    config = config or FitConfig()
    c = _prepared(counts, config.regularization)
    if not strongly_connected(c):
        raise NonIdentifiableError(check_connectivity(c))
    m = c.shape[0]
    p0 = np.full(m, 1.0 / m) if init is None else np.asarray(init, dtype=float) / np.sum(init)
    p, it, change, converged = mm_solve(c.sum(axis=1), c + c.T, p0, config.tol, config.max_iters)
    return FitResult(p, _loglik(c, p), int(it), bool(converged), float(change))


def stationarity_tolerance(counts, result: FitResult, config: FitConfig | None = None) -> float:
    """Bound on |gradient| implied by the fit's stopping rule.

    Near the fixed point, gradient_i = denom_i * (unnormalized update - p_i),
    so a step of size tol corresponds to a gradient of order tol * denom_i.
    A factor of 10 absorbs the renormalization and the remaining contraction.
    """
    config = config or FitConfig()
    c = _prepared(counts, config.regularization)
    p = result.strengths
    totals = c + c.T
    denom = (totals / (p[:, None] + p[None, :])).sum(axis=1)
    return 10.0 * max(config.tol, result.last_change) * float(denom.max())
