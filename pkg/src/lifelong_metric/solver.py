"""Per-task weight subproblem.

Given a dictionary ``L0`` (d, d_hat) and a target metric ``M_star``
(d_hat, d_hat), find the (d, d) weight matrix minimizing::

    F(W) = 0.5 * ||L0^T W L0 - M_star||_F^2 + lambda_t * sum_{i != j} |W_ij|

with accelerated proximal gradient (FISTA) and backtracking on the stepsize.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DivergenceError, ShapeError

__all__ = [
    "SolverConfig",
    "FistaState",
    "smooth_loss",
    "smooth_gradient",
    "offdiag_l1",
    "prox_l1_off",
    "objective",
    "solve_weights",
]

MAX_BACKTRACKS = 200


@dataclass(frozen=True)
class SolverConfig:
    lambda_t: float = 0.1
    eta0: float = 1.0
    backtrack_shrink: float = 0.5
    max_iter: int = 500
    rel_tol: float = 1e-6

    def __post_init__(self):
        if not self.lambda_t >= 0:
            raise ConfigurationError(f"lambda_t must be >= 0, got {self.lambda_t}")
        if not self.eta0 > 0:
            raise ConfigurationError(f"eta0 must be > 0, got {self.eta0}")
        if not 0 < self.backtrack_shrink < 1:
            raise ConfigurationError(f"backtrack_shrink must lie in (0, 1), got {self.backtrack_shrink}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.rel_tol > 0:
            raise ConfigurationError(f"rel_tol must be > 0, got {self.rel_tol}")


@dataclass
class FistaState:
    W_curr: np.ndarray
    W_prev: np.ndarray
    t_curr: float = 1.0
    t_prev: float = 0.0
    eta: float = 1.0
    iter: int = 0
    objective_history: list = field(default_factory=list)
    best_objective: float = math.inf
    converged: bool = False


def _dictionary_rows(L0):
    return L0.L0 if hasattr(L0, "L0") else np.asarray(L0, dtype=float)


def _check_shapes(L, W, M_star):
    d, d_hat = L.shape
    if W.shape != (d, d):
        raise ShapeError(f"W has shape {W.shape}, expected ({d}, {d})")
    if M_star.shape != (d_hat, d_hat):
        raise ShapeError(f"M_star has shape {M_star.shape}, expected ({d_hat}, {d_hat})")


def smooth_loss(L0, W, M_star):
    """``0.5 * ||L0^T W L0 - M_star||_F^2``."""
    L = _dictionary_rows(L0)
    W = np.asarray(W, dtype=float)
    M_star = np.asarray(M_star, dtype=float)
    _check_shapes(L, W, M_star)
    R = L.T @ W @ L - M_star
    return 0.5 * float(np.sum(R * R))


def smooth_gradient(L0, W, M_star):
    """Gradient of the smooth loss: ``L0 L0^T W L0 L0^T - L0 M_star L0^T``."""
    L = _dictionary_rows(L0)
    W = np.asarray(W, dtype=float)
    M_star = np.asarray(M_star, dtype=float)
    _check_shapes(L, W, M_star)
    G = L @ L.T
    return G @ W @ G - L @ M_star @ L.T


def offdiag_l1(W):
    W = np.asarray(W, dtype=float)
    return float(np.abs(W).sum() - np.abs(np.diag(W)).sum())


def prox_l1_off(W, threshold):
    """Soft-threshold the off-diagonal entries of ``W``; the diagonal passes through."""
    W = np.asarray(W, dtype=float)
    out = np.sign(W) * np.maximum(np.abs(W) - threshold, 0.0)
    np.fill_diagonal(out, np.diag(W))
    return out


def objective(L0, W, M_star, lambda_t):
    return smooth_loss(L0, W, M_star) + lambda_t * offdiag_l1(W)


def solve_weights(L0, M_star, W_init=None, cfg=None, trace=None):
    """Minimize the composite weight objective by FISTA with backtracking.

    Parameters
    ----------
    L0 : LifelongDictionary or (d, d_hat) array
    M_star : (d_hat, d_hat) array
        Target metric.
    W_init : (d, d) array, optional
        Starting point; identity when omitted.
    cfg : SolverConfig, optional
    trace : file-like, optional
        Receives one ``iter eta objective`` line per outer iteration.

    Returns
    -------
    W : (d, d) array
        The iterate with the lowest objective seen, ``W_init`` included.
    state : FistaState
        Final momentum state, stepsize, history and ``converged`` flag.

    Notes
    -----
    The search point is ``V = W_i + alpha_i (W_i - W_{i-1})`` with
    ``alpha_i = (t_{i-2} - 1) / t_{i-1}``, starting from ``t_{-1} = 0`` and
    ``t_0 = 1``, and ``t_i = (1 + sqrt(1 + 4 t_{i-1}^2)) / 2``.  The stepsize
    is shrunk until ``f(P) <= f(V) + <P - V, grad f(V)> + ||P - V||^2 / (2 eta)``
    and is carried over to the next iteration.  Iteration stops once an
    iterate's objective lies within ``rel_tol`` (relative) of the best so far.
    """
    cfg = cfg or SolverConfig()
    L = _dictionary_rows(L0)
    M_star = np.asarray(M_star, dtype=float)
    d = L.shape[0]
    W0 = np.eye(d) if W_init is None else np.array(W_init, dtype=float)
    _check_shapes(L, W0, M_star)

    lam = cfg.lambda_t
    gram = L @ L.T
    target = L @ M_star @ L.T

    def f(W):
        R = L.T @ W @ L - M_star
        return 0.5 * float(np.sum(R * R))

    def grad(W):
        return gram @ W @ gram - target

    F0 = f(W0) + lam * offdiag_l1(W0)
    if not np.isfinite(F0):
        raise DivergenceError("objective at W_init is not finite")
    state = FistaState(W_curr=W0.copy(), W_prev=W0.copy(), eta=cfg.eta0,
                       objective_history=[F0], best_objective=F0)
    W_best = W0.copy()

    for it in range(1, cfg.max_iter + 1):
        alpha = (state.t_prev - 1.0) / state.t_curr
        V = state.W_curr + alpha * (state.W_curr - state.W_prev)
        fV = f(V)
        gV = grad(V)
        eta = state.eta
        for _ in range(MAX_BACKTRACKS):
            P = prox_l1_off(V - eta * gV, lam * eta)
            D = P - V
            fP = f(P)
            quad = fV + float(np.sum(D * gV)) + float(np.sum(D * D)) / (2.0 * eta)
            if fP <= quad + 1e-12 * max(1.0, abs(quad)):
                break
            eta *= cfg.backtrack_shrink
        else:
            raise DivergenceError(f"backtracking failed to find a stepsize at iteration {it}")

        F = fP + lam * offdiag_l1(P)
        if not np.isfinite(F):
            raise DivergenceError(f"non-finite objective at iteration {it}")
        if trace is not None:
            trace.write(f"{it} {eta:.6e} {F:.17g}\n")

        state.W_prev, state.W_curr = state.W_curr, P
        state.t_prev, state.t_curr = state.t_curr, (1.0 + math.sqrt(1.0 + 4.0 * state.t_curr ** 2)) / 2.0
        state.eta = eta
        state.iter = it
        state.objective_history.append(F)

        prev_best = state.best_objective
        if F <= prev_best:
            state.best_objective = F
            W_best = P
        # a step that moves the objective by at most rel_tol relative to the best
        # counts as converged, above or below it: round-off near the optimum can
        # otherwise leave every new value a hair above the best forever
        if abs(prev_best - F) <= cfg.rel_tol * max(abs(prev_best), 1e-12):
            state.converged = True
            break

    return W_best.copy(), state
