"""Iterative rounding driver.

Each round solves the Nash welfare relaxation over the voters still waiting,
at a budget that shrinks geometrically, rounds it, and retires every voter
the rounded committee (plus one additament) already serves well enough.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import rng as _rng
from .model import Instance, partition_candidates
from .multilinear import Evaluator
from .nw_search import NwParams, nw_local_search
from .rounding import (RoundingCapExceeded, beta_additive, beta_submodular, round_until_accepted)

logger = logging.getLogger(__name__)

SUBMODULAR_GUARANTEE = 67.37
ADDITIVE_GUARANTEE = 9.27


class NonConvergence(RuntimeError):
    def __init__(self, message: str, round_index: int):
        super().__init__(message)
        self.round_index = round_index


class ParameterError(ValueError):
    """(omega, gamma, kappa, eps) outside the region where the bound is finite."""


def alpha_formula(omega: float, gamma: float, kappa: float, eps: float) -> float:
    """Core approximation bound of the submodular driver for given parameters."""
    beta = beta_submodular(kappa, gamma)
    slack = omega - beta - eps
    if slack <= 0 or not 0 < omega < 1 or not 0 < kappa <= 1 or not 0 <= eps < 1:
        raise ParameterError(f"omega = {omega} must exceed beta + eps = {beta + eps:.6g}")
    head = omega * gamma / (kappa * (1 - omega) * slack * (1 - eps) ** 2)
    return head + (1 + 2 * eps) * gamma


def alpha_additive(omega: float, gamma: float) -> float:
    """The additive-path bound omega gamma / ((1 - omega)(omega - gamma e^(1 - gamma)))."""
    beta = beta_additive(gamma)
    if omega <= beta or not 0 < omega < 1:
        raise ParameterError(f"omega = {omega} must exceed beta = {beta:.6g}")
    return omega * gamma / ((1 - omega) * (omega - beta))


@dataclass(frozen=True)
class DriverParams:
    omega: float = 0.23
    gamma: float = 7.435
    kappa: float = 0.21
    eps: float | None = None  # None: use the instance's epsilon
    profile: str = "practical"
    seed: int = 0
    kind: str = "submodular"

    @classmethod
    def submodular(cls, **kw) -> "DriverParams":
        return cls(**{"omega": 0.23, "gamma": 7.435, "kappa": 0.21, "kind": "submodular", **kw})

    @classmethod
    def additive(cls, **kw) -> "DriverParams":
        return cls(**{"omega": 0.15, "gamma": 6.7, "kappa": 1.0, "kind": "additive", **kw})

    def beta(self) -> float:
        if self.kind == "additive":
            return beta_additive(self.gamma)
        return beta_submodular(self.kappa, self.gamma)

    def check(self, eps: float) -> float:
        """Domain check; returns the bound at the run's eps."""
        if self.gamma < 2:
            raise ParameterError("gamma must be at least 2")
        if self.profile not in ("practical", "proof"):
            raise ParameterError(f"unknown profile {self.profile!r}")
        if self.kind == "additive":
            if self.omega <= self.beta() + eps:
                raise ParameterError(f"omega = {self.omega} must exceed beta + eps")
            return alpha_additive(self.omega, self.gamma)
        return alpha_formula(self.omega, self.gamma, self.kappa, eps)

    def guarantee(self) -> tuple[float, str]:
        if self.kind == "additive":
            return ADDITIVE_GUARANTEE, "9.27 (paper, Lindahl-based)"
        return SUBMODULAR_GUARANTEE, "67.37"


@dataclass
class RoundTrace:
    t: int
    b_t: float
    nw_budget: float
    V_size: int
    W_size: int
    O: list[str]
    attempt: int
    attempts: int
    nw_iters: int
    nw_method: str
    phi: float
    leftover: tuple[str, float] | None = None


@dataclass
class VoterOutcome:
    voter_id: str
    round: int | None  # None: residual voter
    additament: str | None
    ratio: float
    satisfied_by: str  # "round" or "residual"


@dataclass
class SolveReport:
    committee: list[str]
    mask: np.ndarray = field(repr=False)
    total_cost: float = 0.0
    budget: float = 0.0
    rounds: list[RoundTrace] = field(default_factory=list)
    voters: list[VoterOutcome] = field(default_factory=list)
    alpha_guarantee: float = SUBMODULAR_GUARANTEE
    guarantee_label: str = "67.37"
    alpha_bound_at_eps: float = math.nan
    params: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    rounding_search: str = "rejection sampling"
    certificate: dict | None = None
    timestamp: str = ""

    @property
    def nw_iters(self) -> int:
        return sum(r.nw_iters for r in self.rounds)

    @property
    def attempts(self) -> int:
        return sum(r.attempts for r in self.rounds)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out.pop("mask")
        for v in out["voters"]:
            if math.isinf(v["ratio"]):
                v["ratio"] = "inf"
        return out

    def to_json(self, with_timestamp: bool = True) -> str:
        data = self.to_dict()
        if not with_timestamp:
            data.pop("timestamp")
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


def round_budgets(b: float, omega: float, eps: float, m: int) -> list[float]:
    """b_t = (1 - eps)(1 - omega) omega^t b for every t passing the loop guard."""
    b0 = (1 - eps) * (1 - omega) * b
    out = []
    t = 0
    while b0 * omega**t >= eps * b / m:
        out.append(b0 * omega**t)
        t += 1
    return out


def max_rounds(m: int, omega: float, eps: float) -> int:
    return math.ceil(math.log(m * (1 - eps) * (1 - omega) / eps) / math.log(1 / omega)) + 1


def _nw_params(params: DriverParams, inst: Instance, t: int) -> NwParams:
    seed = _rng.derive_seed(params.seed, t, _rng.NW_SAMPLING)
    if params.profile == "proof":
        return NwParams.proof(inst, seed=seed)
    return NwParams.practical(seed=seed)


def _solve(inst: Instance, params: DriverParams, method: str) -> SolveReport:
    if params.eps is not None and params.eps != inst.epsilon:
        inst = dataclasses.replace(inst, epsilon=params.eps, _index={})
    eps, b, m = inst.epsilon, inst.budget, inst.m
    bound = params.check(eps)
    guarantee, label = params.guarantee()
    if params.kind == "submodular":
        # the advertised constant is the eps -> 0 limit of the bound
        assert alpha_formula(params.omega, params.gamma, params.kappa, 0.0) < guarantee
    else:
        assert alpha_additive(params.omega, params.gamma) < guarantee
    beta = params.beta()

    large = partition_candidates(inst).large_mask(m)
    T = ~large
    V = list(range(inst.n))
    rounds: list[RoundTrace] = []
    outcomes: dict[int, VoterOutcome] = {}

    for t, b_t in enumerate(round_budgets(b, params.omega, eps, m)):
        if not V:
            break
        nwp = _nw_params(params, inst, t)
        res = nw_local_search(inst, V, params.kappa * b_t, nwp)
        if not res.converged:
            raise NonConvergence(f"round {t}: NW search did not converge after {res.iters} swaps", t)
        fractional = Evaluator(inst, V, nwp.cfg).value_only(res.x.x)
        try:
            out = round_until_accepted(inst, V, res.x.x, fractional, b_t, params.gamma, beta,
                                       params.seed, (t, _rng.ROUNDING), method, params.kappa)
        except RoundingCapExceeded as exc:
            raise RoundingCapExceeded(f"round {t}: {exc}", exc.attempts, exc.best_satisfied,
                                      exc.needed) from exc
        O = out.committee
        T = T | O.members
        W_t = [r for r in out.records if r.satisfied]
        for r in W_t:
            q = None if r.additament is None else inst.candidate_ids[r.additament]
            outcomes[r.voter] = VoterOutcome(r.voter_id, t, q, r.ratio, "round")
        done = {r.voter for r in W_t}
        left = None
        if O.leftover is not None:
            left = (inst.candidate_ids[O.leftover[0]], O.leftover[1])
        rounds.append(RoundTrace(t, b_t, params.kappa * b_t, len(V), len(W_t),
                                 inst.ids(O.members & large), out.attempt, out.attempts,
                                 res.iters, res.method, res.phi, left))
        V = [i for i in V if i not in done]

    # voters still waiting are served by T* plus one additament
    eye = np.eye(m, dtype=bool)
    for i in V:
        vals = inst.voters[i].values(T[None, :] | eye)
        q = int(np.argmax(vals))
        outcomes[i] = VoterOutcome(inst.voters[i].id, None, inst.candidate_ids[q], math.inf, "residual")

    cost = inst.cost(T)
    if cost > b * (1 + 1e-9):
        raise AssertionError(f"committee cost {cost} exceeds budget {b}")
    assert len(rounds) <= max_rounds(m, params.omega, eps)
    return SolveReport(
        committee=inst.ids(T), mask=T, total_cost=cost, budget=b, rounds=rounds,
        voters=[outcomes[i] for i in range(inst.n)],
        alpha_guarantee=guarantee, guarantee_label=label, alpha_bound_at_eps=bound,
        params={**dataclasses.asdict(params), "eps": eps, "beta": beta, "rounding": method},
        seeds={"root": params.seed,
               "nw": [_rng.derive_seed(params.seed, r.t, _rng.NW_SAMPLING) for r in rounds]},
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    )


def solve_submodular(inst: Instance, params: DriverParams | None = None) -> SolveReport:
    params = params or DriverParams.submodular()
    if not inst.all_submodular:
        logger.warning("instance has non-submodular voters; the guarantee does not apply")
    return _solve(inst, params, "independent")


def solve_additive(inst: Instance, params: DriverParams | None = None) -> SolveReport:
    params = params or DriverParams.additive()
    if not inst.all_additive:
        raise ValueError("solve_additive needs additive voters only")
    if params.kappa != 1.0:
        raise ParameterError("the additive driver runs with kappa = 1")
    return _solve(inst, dataclasses.replace(params, kind="additive"), "dependent")
