"""From fractional allocations to committees.

Independent rounding (submodular path) includes every affordable large
candidate with probability min(1, x_j).  Dependent rounding (additive path)
is pairwise pipage: it keeps sum_j s_j x_j fixed on every step, preserves
every marginal, and leaves at most one fractional coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as _rng
from .model import Instance, partition_candidates
from .multilinear import EstimatorConfig, Evaluator, as_vector

_SNAP = 1e-12


class RoundingCapExceeded(RuntimeError):
    def __init__(self, message: str, attempts: int, best_satisfied: int, needed: int):
        super().__init__(message)
        self.attempts = attempts
        self.best_satisfied = best_satisfied
        self.needed = needed


@dataclass
class Committee:
    members: np.ndarray  # bool mask
    leftover: tuple[int, float] | None = None
    cost_trace: list[float] = field(default_factory=list, repr=False)

    def cost(self, sizes: np.ndarray) -> float:
        return float(sizes @ self.members)

    def X(self) -> np.ndarray:
        """Selection vector: 1 on members, the leftover weight on the leftover."""
        out = self.members.astype(float)
        if self.leftover is not None:
            out[self.leftover[0]] = self.leftover[1]
        return out


@dataclass(frozen=True)
class SatisfactionRecord:
    voter: int
    voter_id: str
    satisfied: bool
    additament: int | None
    ratio: float
    with_additament: float
    fractional: float


def beta_submodular(kappa: float, gamma: float) -> float:
    """Fraction of voters allowed to stay unsatisfied after independent rounding."""
    return (kappa * math.exp(1 - kappa)) ** (1 / kappa) + (gamma - 1) * math.exp(2 - gamma)


def beta_additive(gamma: float) -> float:
    return gamma * math.exp(1 - gamma)


def overflow_bound(kappa: float) -> float:
    """Chernoff bound on Pr[independent rounding overshoots B]."""
    return (kappa * math.exp(1 - kappa)) ** (1 / kappa)


# ---------------------------------------------------------------------------
# rounding primitives
# ---------------------------------------------------------------------------


def round_independent(inst: Instance, x, B: float, kappa: float, gen: np.random.Generator) -> Committee:
    """Small candidates always; each large j with s_j <= kappa B w.p. min(1, x_j)."""
    x = as_vector(x)
    part = partition_candidates(inst)
    large = part.large_mask(inst.m)
    t2 = large & (inst.sizes <= kappa * B)
    draw = gen.random(inst.m) < x
    members = ~large | (t2 & draw)
    return Committee(members)


def _pipage(X: np.ndarray, s: np.ndarray, gen: np.random.Generator, trace: list | None = None) -> np.ndarray:
    """Pipage on every row of X (trials, m) in place.

    Each step pairs the two lowest-indexed fractional coordinates (j, k) of
    every unfinished row and shifts cost along s_j dx_j = -s_k dx_k.  The
    reach upward for j is a1 and downward a2 (in cost units); j goes up with
    probability a2 / (a1 + a2), which keeps E[x_j] and E[x_k] fixed.  At least
    one of the pair becomes integral, so a row needs at most m - 1 steps.
    """
    rows = np.arange(len(X))
    cost0 = X @ s
    for _ in range(X.shape[1]):
        frac = (X > _SNAP) & (X < 1 - _SNAP)
        active = frac.sum(axis=1) >= 2
        if not active.any():
            break
        r = rows[active]
        f = frac[active]
        j = f.argmax(axis=1)
        f[np.arange(len(r)), j] = False
        k = f.argmax(axis=1)
        xj, xk = X[r, j], X[r, k]
        sj, sk = s[j], s[k]
        a1 = np.minimum((1 - xj) * sj, xk * sk)
        a2 = np.minimum(xj * sj, (1 - xk) * sk)
        up = gen.random(len(r)) * (a1 + a2) < a2
        move = np.where(up, a1, -a2)
        X[r, j] = xj + move / sj
        X[r, k] = xk - move / sk
        X[X <= _SNAP] = 0.0
        X[X >= 1 - _SNAP] = 1.0
        cost = X @ s
        drift = np.abs(cost - cost0).max()
        assert drift <= 1e-9 * max(1.0, float(np.abs(cost0).max())), f"pipage moved cost by {drift}"
        if trace is not None:
            trace.append(float(cost[0]))
    return X


def _prepare(x, sizes, B):
    x = np.asarray(x, dtype=float)
    s = np.asarray(sizes, dtype=float)
    if (x < -_SNAP).any():
        raise ValueError("x must be non-negative")
    x = np.clip(x, 0.0, 1.0)
    x[x <= _SNAP] = 0.0
    x[x >= 1 - _SNAP] = 1.0
    if B is not None and s @ x > B * (1 + 1e-12) + 1e-12:
        raise ValueError("fractional cost exceeds B")
    return x, s


def round_dependent(x, sizes, B: float | None = None, gen: np.random.Generator | int = 0,
                    trace: bool = False) -> Committee:
    """Budget-exact dependent rounding of one fractional vector.

    Marginals are preserved, sum_j s_j X_j never changes, and at most one
    coordinate is left fractional (returned as the leftover).
    """
    x, s = _prepare(x, sizes, B)
    if isinstance(gen, (int, np.integer)):
        gen = _rng.stream(int(gen), _rng.ROUNDING)
    X = x[None, :].copy()
    costs = [float(s @ x)] if trace else None
    _pipage(X, s, gen, costs)
    X = X[0]
    members = X >= 1.0
    frac = np.flatnonzero((X > 0) & (X < 1))
    leftover = (int(frac[0]), float(X[frac[0]])) if len(frac) else None
    return Committee(members, leftover, costs or [])


def round_dependent_many(x, sizes, B: float | None, trials: int, seed: int = 0) -> np.ndarray:
    """``trials`` independent pipage roundings of x, as a (trials, m) array."""
    x, s = _prepare(x, sizes, B)
    X = np.repeat(x[None, :], trials, axis=0)
    return _pipage(X, s, _rng.stream(seed, _rng.ROUNDING))


# ---------------------------------------------------------------------------
# satisfaction
# ---------------------------------------------------------------------------


def gamma_satisfaction(inst: Instance, W: Sequence[int], fractional: np.ndarray, O: Committee,
                       gamma: float) -> list[SatisfactionRecord]:
    """For each voter, the best single additament q and whether
    u_i(O + q) >= U_i(x) / gamma.  ``fractional`` holds U_i(x) aligned with W."""
    base = O.members
    masks = np.repeat(base[None, :], inst.m, axis=0) | np.eye(inst.m, dtype=bool)
    out = []
    for k, i in enumerate(W):
        voter = inst.voters[i]
        vals = voter.values(masks)
        q = int(np.argmax(vals))
        best = float(vals[q])
        ux = float(fractional[k])
        if ux <= 0:
            out.append(SatisfactionRecord(i, voter.id, True, q, math.inf, best, ux))
            continue
        ok = best >= ux / gamma - 1e-12 * max(1.0, ux)
        out.append(SatisfactionRecord(i, voter.id, ok, q, best / ux, best, ux))
    return out


def fractional_utilities(inst: Instance, W: Sequence[int], x, cfg: EstimatorConfig | None = None) -> np.ndarray:
    return Evaluator(inst, W, cfg).value_only(as_vector(x))


def satisfied_needed(n_w: int, beta: float, eps: float) -> int:
    return math.ceil((1 - beta - eps) * n_w - 1e-9)


def accept_realization(inst: Instance, W: Sequence[int], fractional: np.ndarray, O: Committee,
                       B: float, gamma: float, beta: float, eps: float | None = None) -> bool:
    """Large-candidate cost within B and at least ceil((1 - beta - eps)|W|)
    voters gamma-satisfied."""
    eps = inst.epsilon if eps is None else eps
    large = partition_candidates(inst).large_mask(inst.m)
    if float(inst.sizes[large] @ O.members[large]) > B * (1 + 1e-12):
        return False
    recs = gamma_satisfaction(inst, W, fractional, O, gamma)
    return sum(r.satisfied for r in recs) >= satisfied_needed(len(W), beta, eps)


def round_submodular(inst: Instance, W: Sequence[int], x, B: float, kappa: float, gamma: float,
                     seed: int = 0, cfg: EstimatorConfig | None = None, fractional=None):
    """One independent-rounding draw together with its satisfaction records."""
    gen = _rng.stream(seed, _rng.ROUNDING)
    O = round_independent(inst, x, B, kappa, gen)
    if fractional is None:
        fractional = fractional_utilities(inst, W, x, cfg)
    return O, gamma_satisfaction(inst, W, fractional, O, gamma)


@dataclass
class RoundingOutcome:
    committee: Committee
    records: list[SatisfactionRecord]
    attempt: int
    attempts: int


def round_until_accepted(inst: Instance, W: Sequence[int], x, fractional: np.ndarray, B: float,
                         gamma: float, beta: float, seed: int, counters: tuple[int, ...],
                         method: str, kappa: float = 1.0, cap: int | None = None) -> RoundingOutcome:
    """Rejection-sample rounding draws until one passes :func:`accept_realization`.

    Attempt ``a`` uses the stream (seed, *counters, a); the cap defaults to
    ceil(40 / eps).
    """
    eps = inst.epsilon
    cap = cap or math.ceil(40 / eps)
    needed = satisfied_needed(len(W), beta, eps)
    large = partition_candidates(inst).large_mask(inst.m)
    best = -1
    for a in range(cap):
        gen = _rng.stream(seed, *counters, a)
        if method == "independent":
            O = round_independent(inst, x, B, kappa, gen)
        elif method == "dependent":
            xv = as_vector(x).copy()
            sub = round_dependent(xv[large], inst.sizes[large], B, gen)
            members = ~large.copy()
            members[np.flatnonzero(large)] = sub.members
            left = None if sub.leftover is None else (int(np.flatnonzero(large)[sub.leftover[0]]), sub.leftover[1])
            O = Committee(members, left)
        else:
            raise ValueError(f"unknown rounding method {method!r}")
        recs = gamma_satisfaction(inst, W, fractional, O, gamma)
        count = sum(r.satisfied for r in recs)
        best = max(best, count)
        within = float(inst.sizes[large] @ O.members[large]) <= B * (1 + 1e-12)
        if within and count >= needed:
            return RoundingOutcome(O, recs, a, a + 1)
    raise RoundingCapExceeded(
        f"no accepted realization in {cap} attempts (best {best} satisfied, need {needed})",
        cap, best, needed)
