from typing import Optional

import numpy as np
from jaxtyping import Float
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from src.utils.constants import (
    IMAG_TOL,
    REVERSIBILITY_TOL,
    STATIONARITY_TOL,
    STOCHASTIC_TOL,
)
from src.utils.exceptions import ReversibilityError, ValidationError


def as_stochastic(kernel) -> Float[np.ndarray, "n n"]:  # noqa: F722
    """
    Convert a nested list to a float64 matrix and check it is row-stochastic
    """
    P = np.array(kernel, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise ValidationError(
            f"Transition kernel must be a non-empty square matrix, got shape {P.shape}"
        )
    if not np.all(np.isfinite(P)):
        raise ValidationError("Transition kernel contains non-finite entries")
    if np.any(P < 0):
        a, b = np.argwhere(P < 0)[0]
        raise ValidationError(f"Negative transition probability P[{a}][{b}] = {P[a, b]}")
    row_sums = P.sum(axis=1)
    bad_rows = np.flatnonzero(np.abs(row_sums - 1.0) > STOCHASTIC_TOL)
    if bad_rows.size:
        raise ValidationError(
            f"Kernel rows {bad_rows.tolist()} do not sum to 1 "
            f"(sums {row_sums[bad_rows].tolist()})"
        )
    return P


def validate_kernel(kernel) -> Float[np.ndarray, "n n"]:  # noqa: F722
    """
    Check that a kernel is row-stochastic, irreducible and aperiodic.

    A single-state kernel [[1.0]] is accepted as trivially ergodic.

    :param kernel: square matrix (nested list or array)
    :return: the kernel as a float64 array
    :raises ValidationError: naming the states outside the communicating class of
        state 0 for reducible kernels, or the period for periodic ones
    """
    P = as_stochastic(kernel)
    n = P.shape[0]
    if n == 1:
        return P

    graph = csr_matrix((P > 0).astype(np.float64))
    forward, predecessors = breadth_first_order(
        graph, 0, directed=True, return_predecessors=True
    )
    backward = breadth_first_order(
        graph.T.tocsr(), 0, directed=True, return_predecessors=False
    )
    communicating = np.intersect1d(forward, backward)
    if communicating.size < n:
        unreachable = np.setdiff1d(np.arange(n), communicating)
        raise ValidationError(
            f"Kernel is reducible: states {unreachable.tolist()} "
            "do not communicate with state 0"
        )

    # period = gcd over edges (u, v) of level(u) + 1 - level(v) for BFS levels
    level = np.zeros(n, dtype=np.int64)
    for v in forward[1:]:
        level[v] = level[predecessors[v]] + 1
    rows, cols = np.nonzero(P > 0)
    period = int(np.gcd.reduce(np.abs(level[rows] + 1 - level[cols])))
    if period != 1:
        raise ValidationError(f"Kernel is periodic with period {period}")
    return P


def stationary_distribution(
    kernel,
) -> Float[np.ndarray, "n"]:  # noqa: F821
    """
    Solve pi P = pi, sum(pi) = 1 for an irreducible aperiodic kernel.
    """
    P = validate_kernel(kernel)
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = np.max(np.abs(pi @ P - pi))
    if residual > STATIONARITY_TOL:
        raise ValidationError(
            f"Stationary distribution residual {residual:.3e} exceeds {STATIONARITY_TOL}"
        )
    return pi


def check_reversible(
    kernel: Float[np.ndarray, "n n"],  # noqa: F722
    pi: Float[np.ndarray, "n"],  # noqa: F821
) -> None:
    """Detailed balance pi_a P(a,b) = pi_b P(b,a) for every pair of states."""
    flow = pi[:, None] * kernel
    imbalance = np.abs(flow - flow.T)
    if imbalance.max() > REVERSIBILITY_TOL:
        a, b = np.unravel_index(np.argmax(imbalance), imbalance.shape)
        raise ReversibilityError(
            f"Kernel is not reversible: pi[{a}] P[{a}][{b}] - pi[{b}] P[{b}][{a}] "
            f"= {flow[a, b] - flow[b, a]:.3e}"
        )


def second_eigenvalue_modulus(
    kernel, pi: Optional[np.ndarray] = None
) -> float:
    """
    Second-largest eigenvalue modulus of a reversible kernel.

    The spectrum is read from D^{1/2} P D^{-1/2} with D = diag(pi), which is
    symmetric for reversible kernels, so the eigenvalues are real.
    """
    P = validate_kernel(kernel)
    if P.shape[0] == 1:
        return 0.0
    if pi is None:
        pi = stationary_distribution(P)

    eigenvalues = np.linalg.eigvals(P)
    imag = np.max(np.abs(eigenvalues.imag))
    if imag > IMAG_TOL:
        raise ReversibilityError(
            f"Kernel has complex eigenvalues (|imag| up to {imag:.3e}); "
            "a reversible kernel has a real spectrum"
        )
    check_reversible(P, pi)

    sqrt_pi = np.sqrt(pi)
    S = sqrt_pi[:, None] * P / sqrt_pi[None, :]
    S = 0.5 * (S + S.T)
    spectrum = linalg.eigvalsh(S)  # ascending, spectrum[-1] == 1
    slem = float(np.max(np.abs(spectrum[:-1])))
    return min(max(slem, 0.0), 1.0)


def spectral_gap(kernel, pi: Optional[np.ndarray] = None) -> float:
    """epsilon = 1 - lambda_2 with lambda_2 the second-largest eigenvalue modulus."""
    gap = 1.0 - second_eigenvalue_modulus(kernel, pi)
    if gap <= 0.0:
        raise ValidationError("Kernel has no spectral gap")
    return gap
