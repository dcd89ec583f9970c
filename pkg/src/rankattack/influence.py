"""First-order (implicit function theorem) prediction of how flips move the MLE.

At a fitted optimum the gradient of the log-likelihood in theta = ln p is
zero.  Perturbing the counts by dD shifts the optimum by approximately

    d_theta = -H^{-1} (d gradient / dD) dD

H is singular along the all-ones direction (adding a constant to theta
changes nothing), so the solve is restricted to zero-sum vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .core import Ranking, ranking_from_strengths
from .mle import _pair, hessian


class IllConditionedError(np.linalg.LinAlgError):
    """Hessian is singular beyond its translation null direction."""

    def __init__(self, message: str, cut: tuple[tuple[int, ...], tuple[int, ...]]):
        super().__init__(message)
        self.cut = cut


@dataclass(frozen=True)
class InfluenceEstimate:
    delta_theta: np.ndarray
    predicted_ranking: Ranking


def flip_gradient_delta(counts, p, winner: int, loser: int) -> np.ndarray:
    """Change in ``gradient(counts, p)`` when one winner>loser count is reversed.

    Pair totals are unchanged by a flip, so the expectation terms cancel and
    only the observed win counts move.
    """
    c, p = _pair(counts, p)
    if winner == loser:
        raise ValueError("winner and loser must differ")
    if c[winner, loser] <= 0:
        raise ValueError(f"no {winner}>{loser} comparison to flip")
    delta = np.zeros(len(p))
    delta[winner] -= 1.0
    delta[loser] += 1.0
    return delta


# relative spectral gap below which the comparison graph is treated as cut
_GAP_RTOL = 1e-12


def solve_zero_sum(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``h x = -rhs`` for zero-sum x, given h annihilates the ones vector."""
    m = h.shape[0]
    lap = -h
    evals, evecs = np.linalg.eigh(lap)
    scale = max(float(evals[-1]), 1e-300)
    if m > 1 and evals[1] <= _GAP_RTOL * scale:
        fiedler = evecs[:, 1]
        side = fiedler >= 0
        cut = (tuple(np.flatnonzero(side).tolist()), tuple(np.flatnonzero(~side).tolist()))
        raise IllConditionedError(
            f"Hessian is singular beyond the ones direction (spectral gap {evals[1]:.3g});"
            f" weakest cut separates {cut[0]} from {cut[1]}",
            cut,
        )
    # adding the ones projector makes the matrix nonsingular without touching
    # its action on zero-sum vectors
    shifted = lap + np.full((m, m), 1.0 / m)
    x = scipy.linalg.solve(shifted, rhs, assume_a="pos")
    return x - x.mean()


def influence_of_flips(
    counts, p_hat, flips: Iterable[Sequence[int]]
) -> InfluenceEstimate:
    c, p = _pair(counts, p_hat)
    rhs = np.zeros(len(p))
    work = c.copy()
    for winner, loser in flips:
        rhs += flip_gradient_delta(work, p, winner, loser)
        work[winner, loser] -= 1
        work[loser, winner] += 1
    theta = np.log(p)
    if not rhs.any():
        return InfluenceEstimate(np.zeros(len(p)), ranking_from_strengths(p))
    d_theta = solve_zero_sum(hessian(c, p), rhs)
    shifted = np.exp(theta - theta.mean() + d_theta)
    return InfluenceEstimate(d_theta, ranking_from_strengths(shifted / shifted.sum()))
