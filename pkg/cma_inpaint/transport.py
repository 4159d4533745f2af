# -*- coding: utf-8 -*-

"""
Entropic optimal transport (log-domain Sinkhorn) and an exact LP oracle.

`sinkhorn` solves min ⟨T, C⟩ − ε·H(T) over plans with marginals (a, b),
iterating on the dual potentials in the log domain so small ε stays
finite. With `epsilon_scaling` the potentials are warm-started along a
decreasing ε schedule, which converges in far fewer iterations at small ε.

`exact_ot_oracle` solves the unregularized problem with the HiGHS linear
programming solver; it exists to validate the Sinkhorn solver on small
instances.
"""

from typing import NamedTuple, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.optimize import linprog
from scipy.special import logsumexp

from cma_inpaint.exceptions import DimensionError, NumericError

# Largest n·m accepted by the exact oracle
ORACLE_MAX_ENTRIES = 25

# Geometric decay of ε between warm-start stages
_SCALING_FACTOR = 0.5


class SinkhornResult(NamedTuple):
    """
    Attributes:
        plan: Transport plan, n×m
        value: ⟨plan, C⟩
        iterations: Sinkhorn iterations run (over all ε stages)
        marginal_error: max(‖T·1 − a‖∞, ‖Tᵀ·1 − b‖∞)
        converged: True if marginal_error ≤ tol at the final ε
    """

    plan: np.ndarray
    value: float
    iterations: int
    marginal_error: float
    converged: bool


def _check_marginals(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> None:
    if cost.ndim != 2 or cost.shape != (a.shape[0], b.shape[0]):
        raise DimensionError(f"transport: cost {cost.shape} does not match marginals {a.shape}, {b.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("transport: marginals must be nonnegative")
    if not np.isclose(a.sum(), b.sum(), rtol=0.0, atol=1e-9):
        raise ValueError(f"transport: marginal masses differ ({a.sum():.12g} vs {b.sum():.12g})")


def _sinkhorn_stage(
    cost: np.ndarray,
    log_a: np.ndarray,
    log_b: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    epsilon: float,
    f: np.ndarray,
    g: np.ndarray,
    max_iter: int,
    tol: float,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int, float, bool]:
    best: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, float]] = None
    for iteration in range(1, max_iter + 1):
        g = epsilon * (log_b - logsumexp((f[:, None] - cost) / epsilon, axis=0))
        f = epsilon * (log_a - logsumexp((g[None, :] - cost) / epsilon, axis=1))
        plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
        error = max(np.abs(plan.sum(axis=1) - a).max(), np.abs(plan.sum(axis=0) - b).max())
        if best is None or error < best[3]:
            best = (plan, f, g, error)
        if error <= tol:
            return plan, f, g, iteration, error, True
    plan, f, g, error = best
    return plan, f, g, max_iter, error, False


def sinkhorn(
    cost: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    epsilon: float = 0.05,
    max_iter: int = 200,
    tol: float = 1e-6,
    epsilon_scaling: bool = False,
) -> SinkhornResult:
    """
    Entropic OT plan in the log domain.

    Args:
        cost: n×m cost matrix
        a: Row marginal (length n)
        b: Column marginal (length m), same total mass as a
        epsilon: Entropic regularization strength
        max_iter: Iteration budget per ε stage
        tol: Marginal violation (∞-norm) accepted as converged
        epsilon_scaling: Warm-start from a larger ε down to `epsilon`

    Returns:
        SinkhornResult; on non-convergence a warning is logged and the
        iterate with the smallest marginal violation is returned

    Raises:
        DimensionError: If shapes disagree
        ValueError: If the marginals are negative or their masses differ
    """
    cost = np.asarray(cost, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_marginals(cost, a, b)
    if epsilon <= 0:
        raise ValueError(f"sinkhorn: epsilon must be positive, got {epsilon}")

    schedule = [epsilon]
    if epsilon_scaling:
        current = max(float(np.abs(cost).max()), epsilon)
        schedule = []
        while current > epsilon:
            schedule.append(current)
            current *= _SCALING_FACTOR
        schedule.append(epsilon)

    with np.errstate(divide="ignore"):
        log_a, log_b = np.log(a), np.log(b)
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    total = 0
    for stage_eps in schedule:
        plan, f, g, used, error, converged = _sinkhorn_stage(
            cost, log_a, log_b, a, b, stage_eps, f, g, max_iter, tol
        )
        total += used
    if not np.all(np.isfinite(plan)):
        raise NumericError("sinkhorn produced a non-finite plan", component="sinkhorn")
    if not converged:
        logger.warning(
            f"[Sinkhorn] Not converged after {max_iter} iterations at ε={epsilon:g} "
            f"(marginal error {error:.3e} > tol {tol:g}); using best iterate"
        )
    return SinkhornResult(
        plan=plan,
        value=float((plan * cost).sum()),
        iterations=total,
        marginal_error=float(error),
        converged=converged,
    )


def exact_ot_oracle(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """
    Exact optimal transport value by linear programming (HiGHS).

    Args:
        cost: n×m cost matrix with n·m ≤ 25
        a: Row marginal
        b: Column marginal with the same mass

    Returns:
        min over plans T ≥ 0 with T·1 = a, Tᵀ·1 = b of ⟨T, C⟩

    Raises:
        DimensionError: If shapes disagree or n·m > 25
        ValueError: If the marginal masses differ
    """
    cost = np.asarray(cost, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_marginals(cost, a, b)
    n, m = cost.shape
    if n * m > ORACLE_MAX_ENTRIES:
        raise DimensionError(f"exact_ot_oracle: {n}×{m} exceeds {ORACLE_MAX_ENTRIES} entries")
    rows = np.kron(np.eye(n), np.ones((1, m)))
    cols = np.kron(np.ones((1, n)), np.eye(m))
    result = linprog(
        cost.reshape(-1),
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
    )
    if not result.success:
        raise NumericError(f"exact_ot_oracle: LP failed ({result.message})", component="exact_ot_oracle")
    return float(result.fun)
