"""Two-player cooperate/defect model of agreement stability.

Losing the race and catastrophe both pay 0. A first defector wins the
ensuing race with probability ``p_w_given_d``; the race itself ends in
catastrophe with probability ``p_doom``. Cooperation pays ``u_c``
(normalised to 1 by default), winning pays ``u_w``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class StabilityParams:
    u_w: float
    p_doom: float
    p_w_given_d: float
    u_c: float = 1.0

    def __post_init__(self) -> None:
        if not self.u_w > 0:
            raise ValueError(f"u_w must be > 0, got {self.u_w}")
        if not self.u_c > 0:
            raise ValueError(f"u_c must be > 0, got {self.u_c}")
        _check_prob("p_doom", self.p_doom)
        _check_prob("p_w_given_d", self.p_w_given_d)

    @property
    def race_value(self) -> float:
        """Expected utility of an uncoordinated race to whoever wins it."""
        return self.u_w * (1.0 - self.p_doom)


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")


def defector_payoff(params: StabilityParams) -> float:
    return params.u_w * (1.0 - params.p_doom) * params.p_w_given_d


def second_mover_payoff(params: StabilityParams) -> float:
    return params.u_w * (1.0 - params.p_doom) * (1.0 - params.p_w_given_d)


def is_stable(params: StabilityParams) -> bool:
    """Cooperation is stable iff defecting first pays strictly less than ``u_c``."""
    return defector_payoff(params) < params.u_c


@dataclass(frozen=True)
class ThresholdResult:
    """``bound is None`` means stable for every win probability."""

    bound: Optional[float] = None

    @property
    def unconditional(self) -> bool:
        return self.bound is None

    def __str__(self) -> str:
        return "Unconditional" if self.bound is None else f"Bounded({self.bound:.6f})"


def pwd_threshold(u_w: float, p_doom: float, u_c: float = 1.0) -> ThresholdResult:
    """Supremum of stable ``p_w_given_d`` values.

    Bounded(t) means stability iff ``p_w_given_d < t``. When ``t`` exceeds 1
    every win probability is stable, which is reported as Unconditional.
    ``t == 1`` stays Bounded: a certain win ties cooperation and the tie is
    unstable.
    """
    StabilityParams(u_w, p_doom, 0.0, u_c)
    race = u_w * (1.0 - p_doom)
    if race <= 0.0:
        return ThresholdResult(None)
    t = u_c / race
    return ThresholdResult(None) if t > 1.0 else ThresholdResult(t)


def min_stable_pdoom(u_w: float, p_w_given_d: float, u_c: float = 1.0) -> float:
    """Infimum of ``p_doom`` values for which cooperation is stable.

    Stability holds strictly above the returned value (and at 0 whenever
    defection never pays even without catastrophe risk).
    """
    if not u_w > 0:
        raise ValueError(f"u_w must be > 0, got {u_w}")
    if not 0.0 < p_w_given_d <= 1.0:
        raise ValueError(f"p_w_given_d must be in (0, 1], got {p_w_given_d}")
    return max(0.0, 1.0 - u_c / (u_w * p_w_given_d))


def boundary_curve(
    p_w_given_d: float, u_w_grid: Iterable[float], u_c: float = 1.0
) -> list[tuple[float, float]]:
    """``(u_w, p_doom)`` points separating stable (above) from unstable (below)."""
    return [(u_w, min_stable_pdoom(u_w, p_w_given_d, u_c)) for u_w in u_w_grid]


# -- normal form --------------------------------------------------------------


class Action(enum.IntEnum):
    COOPERATE = 0
    DEFECT = 1


@dataclass(frozen=True)
class PayoffMatrix:
    """``cells[row][col] = (row payoff, column payoff)``, indexed by ``Action``."""

    cells: tuple[tuple[tuple[float, float], tuple[float, float]], tuple[tuple[float, float], tuple[float, float]]]

    def __getitem__(self, profile: tuple[Action, Action]) -> tuple[float, float]:
        r, c = profile
        return self.cells[r][c]

    def row_payoff(self, mine: Action, theirs: Action) -> float:
        return self.cells[mine][theirs][0]

    def col_payoff(self, mine: Action, theirs: Action) -> float:
        return self.cells[theirs][mine][1]


def payoff_matrix(params: StabilityParams, simultaneous_win_prob: float = 0.5) -> PayoffMatrix:
    _check_prob("simultaneous_win_prob", simultaneous_win_prob)
    race = params.race_value
    first = defector_payoff(params)
    second = second_mover_payoff(params)
    s = simultaneous_win_prob
    return PayoffMatrix(
        (
            ((params.u_c, params.u_c), (second, first)),
            ((first, second), (race * s, race * (1.0 - s))),
        )
    )


class GameClass(enum.Enum):
    STAG_HUNT = "StagHunt"
    DEFECTION_DOMINANT = "DefectionDominant"
    OTHER = "Other"


def is_nash(matrix: PayoffMatrix, row: Action, col: Action) -> bool:
    """Weak-inequality check: no unilateral deviation strictly improves."""
    r_now, c_now = matrix[row, col]
    return all(matrix[alt, col][0] <= r_now for alt in Action) and all(
        matrix[row, alt][1] <= c_now for alt in Action
    )


def _defect_strictly_dominates(matrix: PayoffMatrix) -> bool:
    C, D = Action.COOPERATE, Action.DEFECT
    rows = all(matrix.row_payoff(D, t) > matrix.row_payoff(C, t) for t in Action)
    cols = all(matrix.col_payoff(D, t) > matrix.col_payoff(C, t) for t in Action)
    return rows and cols


def classify_game(matrix: PayoffMatrix) -> GameClass:
    C, D = Action.COOPERATE, Action.DEFECT
    if _defect_strictly_dominates(matrix):
        return GameClass.DEFECTION_DOMINANT
    if is_nash(matrix, C, C) and is_nash(matrix, D, D):
        return GameClass.STAG_HUNT
    return GameClass.OTHER


# -- entry and concessions ----------------------------------------------------


def minimal_concession(leader_pwd: float, params: StabilityParams) -> float:
    """Least cooperation utility the leader must be offered to join."""
    _check_prob("leader_pwd", leader_pwd)
    return params.race_value * leader_pwd


def entry_gate(leader_pwd: float, params: StabilityParams, u_c_offer: float) -> bool:
    return minimal_concession(leader_pwd, params) < u_c_offer


def pwd_from_lead(lead_ticks: float, race_ticks: float, sharpness: float = 10.0) -> float:
    """Logistic map from a head start to the defector's win probability.

    ``1 / (1 + exp(-sharpness * lead / race))``: 0.5 with no lead, rising
    monotonically toward 1 as the lead approaches the whole race.
    """
    if race_ticks <= 0:
        raise ValueError("race_ticks must be positive")
    if not 0 <= lead_ticks <= race_ticks:
        raise ValueError("lead_ticks must lie in [0, race_ticks]")
    if not sharpness > 0:
        raise ValueError("sharpness must be positive")
    return 1.0 / (1.0 + math.exp(-sharpness * lead_ticks / race_ticks))


# -- sweeps -------------------------------------------------------------------


SWEEP_COLUMNS = ("u_w", "p_doom", "p_w_given_d", "defector_payoff", "stable")
CURVE_COLUMNS = ("u_w", "p_doom")


def sweep(
    u_w_values: Sequence[float], p_doom_values: Sequence[float], pwd_values: Sequence[float]
) -> list[dict]:
    rows = []
    for u_w in u_w_values:
        for p_doom in p_doom_values:
            for pwd in pwd_values:
                params = StabilityParams(u_w, p_doom, pwd)
                rows.append(
                    {
                        "u_w": u_w,
                        "p_doom": p_doom,
                        "p_w_given_d": pwd,
                        "defector_payoff": defector_payoff(params),
                        "stable": is_stable(params),
                    }
                )
    return rows


def linspace(a: float, b: float, n: int) -> list[float]:
    if n < 1:
        raise ValueError("grid needs at least one point")
    return np.linspace(a, b, n).tolist()


def parse_grid(text: str) -> list[float]:
    """``"a:b:n"`` to ``n`` evenly spaced points from ``a`` to ``b`` inclusive."""
    try:
        a, b, n = text.split(":")
        return linspace(float(a), float(b), int(n))
    except ValueError as exc:
        raise ValueError(f"grid must look like a:b:n, got {text!r}") from exc
