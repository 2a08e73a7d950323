"""Security-level bounds, threshold optimisation and sample-size solving.

With system error ``e``, forger guess-failure probability ``P_e``, expected
image count ``L`` and thresholds ``Th_B < Th_C``::

    honest abort  <= 2 exp(-(Th_B - e)^2 L)
    repudiation   <= 2 exp(-((Th_C - Th_B) / 2)^2 L)
    forge         <=   exp(-(P_e - Th_C)^2 L)

and the security level is the largest of the three. The bounds are reported
as written, so values above 1 are possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


class InfeasibleSecurity(ValueError):
    pass


@dataclass(frozen=True)
class SecurityParams:
    e: float
    P_e: float
    L: float
    Th_B: float
    Th_C: float

    @property
    def ordered(self) -> bool:
        """Whether ``0 <= e < Th_B < Th_C < P_e <= 1`` holds."""
        return 0.0 <= self.e < self.Th_B < self.Th_C < self.P_e <= 1.0


@dataclass(frozen=True)
class SecurityReport:
    p_honest_abort: float
    p_repudiation: float
    p_forge: float
    params: SecurityParams

    @property
    def epsilon(self) -> float:
        return max(self.p_honest_abort, self.p_repudiation, self.p_forge)

    def union(self, n_slots: int) -> dict[str, float]:
        """Union bound over ``n_slots`` per-slot tests (each bound times ``n_slots``)."""
        return {
            "p_honest_abort": n_slots * self.p_honest_abort,
            "p_repudiation": n_slots * self.p_repudiation,
            "p_forge": n_slots * self.p_forge,
            "epsilon": n_slots * self.epsilon,
        }

    def as_dict(self, n_slots: int | None = None) -> dict:
        p = self.params
        out = {
            "e": p.e, "P_e": p.P_e, "L": p.L, "Th_B": p.Th_B, "Th_C": p.Th_C,
            "ordered": p.ordered,
            "p_honest_abort": self.p_honest_abort,
            "p_repudiation": self.p_repudiation,
            "p_forge": self.p_forge,
            "epsilon": self.epsilon,
        }
        if n_slots is not None:
            out["union_bound"] = {"n_slots": n_slots, **self.union(n_slots)}
        return out


def honest_abort_bound(p: SecurityParams) -> float:
    return 2.0 * math.exp(-((p.Th_B - p.e) ** 2) * p.L)


def repudiation_bound(p: SecurityParams) -> float:
    return 2.0 * math.exp(-(((p.Th_C - p.Th_B) / 2.0) ** 2) * p.L)


def forge_bound(p: SecurityParams) -> float:
    return math.exp(-((p.P_e - p.Th_C) ** 2) * p.L)


def effective_guess_failure(P_e: float, ones: int, n_slots: int) -> float:
    """Mismatch probability of one forged record for a message with ``ones`` bits set.

    A wrong slot guess only shows up as noise when it lands on a 1-slot,
    which happens for ``ones`` of the ``n_slots - 1`` wrong slots. The forge
    bound takes every wrong guess as a mismatch, i.e. ``ones = n_slots - 1``.
    """
    if not 0 < ones < n_slots:
        raise ValueError(f"need 0 < ones < n_slots, got {ones} of {n_slots}")
    return P_e * ones / (n_slots - 1)


def message_forge_bound(p: SecurityParams, ones: int, n_slots: int) -> float:
    """Forge bound with the message-adjusted guess failure; 1 once it drops to Th_C."""
    pe = effective_guess_failure(p.P_e, ones, n_slots)
    if pe <= p.Th_C:
        return 1.0
    return math.exp(-((pe - p.Th_C) ** 2) * p.L)


def security_level(p: SecurityParams) -> SecurityReport:
    return SecurityReport(honest_abort_bound(p), repudiation_bound(p), forge_bound(p), p)


def log_epsilon_grid(e, P_e, L, th_b, th_c) -> np.ndarray:
    """log of max of the three bounds, broadcast over threshold arrays."""
    th_b = np.asarray(th_b, dtype=float)
    th_c = np.asarray(th_c, dtype=float)
    la = LN2 - (th_b - e) ** 2 * L
    lr = LN2 - ((th_c - th_b) / 2.0) ** 2 * L
    lf = -((P_e - th_c) ** 2) * L
    return np.maximum(np.maximum(la, lr), lf)


def optimize_thresholds(e: float, P_e: float, L: float, tol: float = 1e-10) -> tuple[float, float, float]:
    """Thresholds minimising the security level, by coarse-to-fine grid search.

    Each pass evaluates a 201 x 201 grid (ties go to the lexicographically
    smallest ``(Th_B, Th_C)``) and shrinks the window to two cells around the
    best point, until the cell width drops below ``tol``.

    Returns ``(Th_B, Th_C, epsilon)``.
    """
    if not e < P_e:
        raise InfeasibleSecurity(f"need e < P_e, got e={e}, P_e={P_e}")
    if not L > 0:
        raise InfeasibleSecurity(f"need L > 0, got {L}")
    n = 201
    lo_b, hi_b, lo_c, hi_c = e, P_e, e, P_e
    best = (e, P_e)
    while True:
        tb = np.linspace(lo_b, hi_b, n)
        tc = np.linspace(lo_c, hi_c, n)
        vals = log_epsilon_grid(e, P_e, L, tb[:, None], tc[None, :])
        # the repudiation term is symmetric in the gap; only Th_B < Th_C is a protocol
        vals = np.where(tb[:, None] < tc[None, :], vals, np.inf)
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        best = (float(tb[i]), float(tc[j]))
        db, dc = tb[1] - tb[0], tc[1] - tc[0]
        if max(db, dc) < tol:
            break
        lo_b, hi_b = max(e, tb[i] - 2 * db), min(P_e, tb[i] + 2 * db)
        lo_c, hi_c = max(e, tc[j] - 2 * dc), min(P_e, tc[j] + 2 * dc)
    th_b, th_c = best
    eps = security_level(SecurityParams(e, P_e, L, th_b, th_c)).epsilon
    return th_b, th_c, eps


def optimal_epsilon(e: float, P_e: float, L: float) -> float:
    if L <= 0:
        return 2.0
    return optimize_thresholds(e, P_e, L)[2]


def required_L(e: float, P_e: float, epsilon_target: float) -> int:
    """Smallest integer ``L`` whose optimised security level is at most ``epsilon_target``.

    A target of 1 or more is met without any counts and returns 0.
    """
    if not e < P_e:
        raise InfeasibleSecurity(f"need e < P_e, got e={e}, P_e={P_e}")
    if not epsilon_target > 0:
        raise InfeasibleSecurity("epsilon_target must be positive")
    if epsilon_target >= 1.0:
        return 0
    lo = 0.0
    hi = 1.0
    while optimal_epsilon(e, P_e, hi) > epsilon_target:
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            raise InfeasibleSecurity("target not reachable for any practical L")
    while hi - lo > 0.25:
        mid = 0.5 * (lo + hi)
        if optimal_epsilon(e, P_e, mid) > epsilon_target:
            lo = mid
        else:
            hi = mid
    L = math.floor(lo)
    while optimal_epsilon(e, P_e, L) > epsilon_target:
        L += 1
    return L


def epsilon_surface(e: float, P_e: float, L: float, n: int = 200):
    """``(Th_B, Th_C, epsilon)`` rows over an ``n x n`` grid on ``[e, P_e]^2``.

    Points with ``Th_B >= Th_C`` carry NaN.
    """
    tb = np.linspace(e, P_e, n)
    tc = np.linspace(e, P_e, n)
    B, C = np.meshgrid(tb, tc, indexing="ij")
    eps = np.where(B < C, np.exp(log_epsilon_grid(e, P_e, L, B, C)), np.nan)
    return B.ravel(), C.ravel(), eps.ravel()


def epsilon_curve(e: float, P_e: float, Ls) -> list[tuple[float, float, float, float]]:
    """Optimised ``(L, Th_B, Th_C, epsilon)`` for each ``L``."""
    return [(float(L), *optimize_thresholds(e, P_e, float(L))) for L in Ls]


def columns(header: list[str], rows) -> str:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(lines) + "\n"
