# optim/metrics.py
import numpy as np

from app.models import ErgodicTracker


def consensus_error(X: np.ndarray) -> float:
    """||X - 1 xbar^T||_F with xbar the column mean."""
    X = np.asarray(X, dtype=float)
    return float(np.linalg.norm(X - X.mean(axis=0, keepdims=True)))


def update_ergodic(tracker: ErgodicTracker, alpha_prev: float, T_A: np.ndarray, S: np.ndarray) -> ErgodicTracker:
    """Stepsize-weighted running averages: Tbar <- Tbar + (alpha/theta)(T_A - Tbar)."""
    if not alpha_prev > 0:
        raise ValueError(f"ergodic weight must be positive, got {alpha_prev}")
    theta = tracker.theta + alpha_prev
    if tracker.Tbar is None:
        Tbar, Sbar = np.array(T_A, dtype=float), np.array(S, dtype=float)
    else:
        w = alpha_prev / theta
        Tbar = tracker.Tbar + w * (T_A - tracker.Tbar)
        Sbar = tracker.Sbar + w * (S - tracker.Sbar)
    return ErgodicTracker(theta=theta, Tbar=Tbar, Sbar=Sbar)
