# app/models.py
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


# ---------- Enums ----------

class ProblemKind(str, Enum):
    LOGISTIC_L1 = "logistic_l1"
    COVARIANCE = "covariance"
    ELASTIC_NET = "elastic_net"
    CUSTOM = "custom"


class SolverKind(str, Enum):
    GLOBAL_DATOS = "global_datos"
    LOCAL_DATOS = "local_datos"
    PG_EXTRA = "pg_extra"
    REFERENCE = "reference"


class Neighborhood(str, Enum):
    CLOSED = "closed"      # {i} plus neighbours
    OPEN = "open"          # neighbours only, as printed in the local min step


class SUpdate(str, Enum):
    CONSISTENT = "consistent"   # S + L^-1 (X_half - X_new - L D_half)
    PRINTED = "printed"         # S + L^-1 (X_half - X_new - D_half)


class DUpdate(str, Enum):
    APPROX = "approx"
    EXACT = "exact"


class ReferenceLineSearch(str, Enum):
    AGENT_MIN = "agent_min"
    POOLED = "pooled"


# ---------- Communication ----------

@dataclass(frozen=True)
class CommLedger:
    """Counted communication rounds; also used as a per-step delta."""

    vector_rounds: int = 0      # each agent exchanged one d-vector with its neighbours
    scalar_rounds: int = 0      # one scalar with neighbours
    global_broadcasts: int = 0  # one scalar network-wide

    def __add__(self, other: CommLedger) -> CommLedger:
        return CommLedger(
            self.vector_rounds + other.vector_rounds,
            self.scalar_rounds + other.scalar_rounds,
            self.global_broadcasts + other.global_broadcasts,
        )


# ---------- Solver states ----------

@dataclass(frozen=True, eq=False)
class GlobalState:
    X: np.ndarray
    S: np.ndarray
    D: np.ndarray
    alpha_prev: float
    k: int = 0

    @classmethod
    def initial(cls, X0: np.ndarray, S0: np.ndarray, alpha_init: float) -> GlobalState:
        return cls(X=X0.copy(), S=S0.copy(), D=np.zeros_like(X0), alpha_prev=float(alpha_init))


@dataclass(frozen=True, eq=False)
class LocalState:
    X: np.ndarray
    S: np.ndarray
    D: np.ndarray
    Lambda_prev: np.ndarray
    k: int = 0

    @classmethod
    def initial(cls, X0: np.ndarray, S0: np.ndarray, alpha_init: float) -> LocalState:
        return cls(
            X=X0.copy(),
            S=S0.copy(),
            D=np.zeros_like(X0),
            Lambda_prev=np.full(X0.shape[0], float(alpha_init)),
        )


@dataclass(frozen=True, eq=False)
class ReferenceState:
    """Stacked two-block iterate; L and M are the explicit square roots of I - W and W."""

    T_B1: np.ndarray
    T_B2: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    Y: np.ndarray
    alpha_prev: float
    L: np.ndarray
    M: np.ndarray
    k: int = 0

    @property
    def X(self) -> np.ndarray:
        return self.T_B1

    @property
    def S(self) -> np.ndarray:
        return self.S1

    @property
    def D(self) -> np.ndarray:
        return self.L @ self.Y

    @classmethod
    def initial(cls, X0: np.ndarray, S0: np.ndarray, alpha_init: float, L: np.ndarray, M: np.ndarray) -> ReferenceState:
        zeros = np.zeros_like(X0)
        return cls(
            T_B1=X0.copy(), T_B2=zeros.copy(), S1=S0.copy(), S2=zeros.copy(), Y=zeros.copy(),
            alpha_prev=float(alpha_init), L=L, M=M,
        )


@dataclass(frozen=True, eq=False)
class PGExtraState:
    X: np.ndarray
    X_prev: np.ndarray | None = None
    WX_prev: np.ndarray | None = None
    Z: np.ndarray | None = None
    grad_prev: np.ndarray | None = None
    k: int = 0


@dataclass(frozen=True, eq=False)
class StepMetrics:
    alpha_used: float | np.ndarray
    linesearch_trials: np.ndarray
    consensus_error: float
    comm: CommLedger
    T_A: np.ndarray | None = None
    decrease_slack: np.ndarray | None = None
    objective_per_agent: np.ndarray | None = None

    @property
    def alpha_min(self) -> float:
        return float(np.min(self.alpha_used))

    @property
    def alpha_max(self) -> float:
        return float(np.max(self.alpha_used))


# ---------- Ergodic averages ----------

@dataclass
class ErgodicTracker:
    theta: float = 0.0
    Tbar: np.ndarray | None = None
    Sbar: np.ndarray | None = None
