"""Continuous local search for the Nash welfare objective sum_i log U_i(x).

The search keeps the cost of the large candidates pinned at B and repeatedly
moves ``delta`` units of cost from the candidate with the smallest
size-normalised gradient to the one with the largest, as long as the gap
exceeds 3 eps / (4 b).

Two parameter profiles exist.  ``proof`` uses the worst-case step
eps^7 b / (312 m^6); such steps are far below float64 resolution, so runs of
identical swaps are executed as one batched move whose length is found by
doubling, and the atomic move is floored at ``resolution`` in x.
``practical`` uses delta = B / (100 m) and halves the step when no
swap passes the test (or a swap fails to raise the objective), stopping
after ``refine_levels`` halvings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Instance, partition_candidates
from .multilinear import Bundle, EstimatorConfig, Evaluator, FractionalAllocation, as_vector

logger = logging.getLogger(__name__)

_TOL = 1e-12


class InfeasibleBudget(ValueError):
    """Floors alone cost more than B, or B exceeds what the candidates can absorb."""


@dataclass(frozen=True)
class NwParams:
    profile: str = "practical"
    delta: float | None = None
    max_iters: int = 100_000
    max_steps: int = 100_000
    refine_levels: int = 10
    batch: bool = False
    resolution: float = 1e-12
    ascent_check: bool = True
    cfg: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        if self.profile not in ("practical", "proof"):
            raise ValueError(f"unknown profile {self.profile!r}")

    @classmethod
    def practical(cls, seed: int = 0, **kw) -> "NwParams":
        kw.setdefault("cfg", EstimatorConfig(delta=1e-3, samples_H=4096, seed=seed))
        return cls(profile="practical", **kw)

    @classmethod
    def proof(cls, inst: Instance, seed: int = 0, **kw) -> "NwParams":
        kw.setdefault("cfg", EstimatorConfig.proof(inst.n, inst.m, inst.epsilon, seed=seed))
        kw.setdefault("max_iters", proof_iteration_bound(inst))
        return cls(profile="proof", refine_levels=0, batch=True, ascent_check=False, **kw)

    def step(self, inst: Instance, B: float) -> float:
        if self.delta is not None:
            return self.delta
        if self.profile == "proof":
            return inst.epsilon**7 * inst.budget / (312 * inst.m**6)
        return B / (100 * inst.m)

    def threshold(self, inst: Instance) -> float:
        return 3 * inst.epsilon / (4 * inst.budget)


def proof_iteration_bound(inst: Instance, c: float = 0.25) -> int:
    """Swap budget under the proof step: the range of phi over the minimum
    per-swap gain c * eps * delta / b."""
    n, m, eps, b = inst.n, inst.m, inst.epsilon, inst.budget
    delta = eps**7 * b / (312 * m**6)
    spread = n * math.log(m) - n * math.log(eps**2 / (5 * m**2))
    return math.ceil(spread / (c * eps * delta / b))


@dataclass
class NwResult:
    x: FractionalAllocation
    B: float
    phi_trace: list[float]
    cost_trace: list[float]
    iters: int
    converged: bool
    final_delta: float
    profile: str
    method: str
    W: list[int]
    trivial: bool = False

    @property
    def phi(self) -> float:
        return self.phi_trace[-1]


def default_floors(inst: Instance, B: float) -> np.ndarray:
    part = partition_candidates(inst)
    large = part.large_mask(inst.m)
    floors = np.ones(inst.m)
    total = inst.sizes[large].sum()
    if total > 0:
        floors[large] = B * inst.epsilon / total
    return floors


def initial_allocation(inst: Instance, B: float, floors: np.ndarray | None = None) -> FractionalAllocation:
    """Lift every large candidate from its floor by the same fraction of its
    headroom so that the large-candidate cost is exactly B."""
    large = partition_candidates(inst).large_mask(inst.m)
    floors = default_floors(inst, B) if floors is None else np.asarray(floors, dtype=float)
    s = inst.sizes
    base = float(s[large] @ floors[large])
    room = float(s[large] @ (1 - floors[large]))
    if base > B * (1 + 1e-12) + _TOL:
        raise InfeasibleBudget(f"floors cost {base:g} > B = {B:g}")
    if base + room < B * (1 - 1e-12) - _TOL:
        raise InfeasibleBudget(f"B = {B:g} exceeds total large size {base + room:g}")
    t = 0.0 if room <= 0 else min(1.0, max(0.0, (B - base) / room))
    x = np.ones(inst.m)
    x[large] = floors[large] + t * (1 - floors[large])
    return FractionalAllocation(x, floors, s, large)


def _best_pair(g: np.ndarray, up_ok: np.ndarray, down_ok: np.ndarray):
    """Steepest admissible (up, down) pair; ties go to the lowest indices."""
    if not up_ok.any() or not down_ok.any():
        return None
    gap = np.where(up_ok[:, None] & down_ok[None, :], g[:, None] - g[None, :], -np.inf)
    np.fill_diagonal(gap, -np.inf)
    flat = int(np.argmax(gap))
    j, l = divmod(flat, len(g))
    if not np.isfinite(gap[j, l]):
        return None
    return j, l, float(gap[j, l])


def nw_local_search(inst: Instance, W: Sequence[int], B: float, params: NwParams | None = None,
                    floors: np.ndarray | None = None) -> NwResult:
    """Locally maximise sum_{i in W} log U_i(x) subject to cost(x on C_l) = B."""
    params = params or NwParams.practical()
    W = list(W)
    if not W:
        raise ValueError("voter set W must be non-empty")
    if B <= 0 or B > inst.budget * (1 + 1e-12):
        raise InfeasibleBudget(f"B = {B:g} outside (0, b]")
    part = partition_candidates(inst)
    large = part.large_mask(inst.m)
    s = inst.sizes
    ev = Evaluator(inst, W, params.cfg)

    if s[large].sum() <= B:
        # every large candidate fits: the whole set is the allocation
        x = FractionalAllocation(np.ones(inst.m), np.ones(inst.m), s, large)
        phi = ev.bundle(x.x, with_grad=False).phi
        return NwResult(x, B, [phi], [x.cost_large], 0, True, 0.0, params.profile, ev.method, W, True)

    x = initial_allocation(inst, B, floors)
    delta = params.step(inst, B)
    if params.batch:
        # a batch of swaps must move x by a representable amount
        delta = max(delta, params.resolution * float(s[large].max()))
    delta_min = delta / 2**params.refine_levels
    tau = params.threshold(inst)
    bundle = ev.bundle(x.x)
    phi_trace, cost_trace = [bundle.phi], [x.cost_large]
    iters, steps, converged = 0, 0, False

    while iters < params.max_iters and steps < params.max_steps:
        steps += 1
        g = bundle.dphi / s
        up_ok = large & (x.x <= 1 - delta / s + _TOL)
        down_ok = large & (x.x >= x.floors + delta / s - _TOL)
        pick = _best_pair(g, up_ok, down_ok)
        if pick is None or pick[2] <= tau:
            if delta / 2 >= delta_min * (1 - 1e-12) and params.refine_levels > 0:
                delta /= 2
                continue
            converged = True
            break
        j, l, _ = pick
        k = _batch_length(ev, x, j, l, delta, tau, params) if params.batch else 1
        trial = x.copy()
        trial.swap(j, l, k * delta)
        np.clip(trial.x, trial.floors, 1.0, out=trial.x)
        new = ev.bundle(trial.x)
        if params.ascent_check and ev.exact and not new.phi > bundle.phi:
            if delta / 2 >= delta_min * (1 - 1e-12) and params.refine_levels > 0:
                delta /= 2
                continue
            converged = True
            break
        x, bundle = trial, new
        iters += k
        phi_trace.append(bundle.phi)
        cost_trace.append(x.recomputed_cost())
    else:
        logger.warning("NW search stopped after %d swaps / %d steps without converging", iters, steps)

    return NwResult(x, B, phi_trace, cost_trace, iters, converged, delta, params.profile,
                    ev.method, W)


def _batch_length(ev: Evaluator, x: FractionalAllocation, j: int, l: int, delta: float,
                  tau: float, params: NwParams) -> int:
    """Largest power of two k such that k consecutive (j, l) swaps stay
    admissible and the pair still passes the test before the last one."""
    s = x.sizes
    room_up = math.floor((1 - x.x[j]) * s[j] / delta + 1e-9)
    room_down = math.floor((x.x[l] - x.floors[l]) * s[l] / delta + 1e-9)
    limit = max(1, min(room_up, room_down))
    k = 1
    while 2 * k <= limit:
        probe = x.x.copy()
        probe[j] += (2 * k - 1) * delta / s[j]
        probe[l] -= (2 * k - 1) * delta / s[l]
        g = ev.bundle(probe).dphi / s
        if g[j] - g[l] <= tau:
            break
        k *= 2
    return k


# ---------------------------------------------------------------------------
# the coalition-size inequality at a local optimum
# ---------------------------------------------------------------------------


@dataclass
class ThmGradReport:
    S: list[int]
    size: int
    bound: float
    cost_y: float
    theta: float
    passed: bool


def check_thm_grad(result: NwResult, inst: Instance, y, theta: float,
                   cfg: EstimatorConfig | None = None) -> ThmGradReport:
    """Count voters of W gaining a theta factor at y and compare with
    |W| Cost(y) / (B (1 - eps) (theta - 1 - 2 eps))."""
    eps = inst.epsilon
    if theta <= 1 + 2 * eps:
        raise ValueError("theta must exceed 1 + 2 eps")
    y = np.asarray(y, dtype=float)
    if (y < -1e-12).any() or (y > 1 + 1e-12).any():
        raise ValueError("y must lie in [0, 1]^m")
    y = as_vector(y)
    cost_y = float(inst.sizes @ y)
    if cost_y > inst.budget * (1 + 1e-12):
        raise ValueError("Cost(y) exceeds b")
    ev = Evaluator(inst, result.W, cfg or EstimatorConfig())
    ux, uy = ev.value_only(result.x.x), ev.value_only(y)
    margin = 0.0 if ev.exact else ev.cfg.effective_delta(inst.m) * (1 + theta)
    S = [result.W[k] for k in np.flatnonzero(uy > theta * ux + margin)]
    bound = len(result.W) * cost_y / (result.B * (1 - eps) * (theta - 1 - 2 * eps))
    return ThmGradReport(S, len(S), bound, cost_y, theta, not S or len(S) < bound)
