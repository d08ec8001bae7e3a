"""Multilinear extension values and partial derivatives.

Three evaluation routes, chosen per voter:

* closed form -- additive voters (``U = w . x``) and gadget voters, whose two
  gadgets are disjoint so the expectation factorises;
* exhaustive -- sum over all 2^m committees when ``m <= cfg.exact_max_m``;
* sampled -- mean over H committees drawn from the product distribution.
  One batch of committees is shared by every voter and every coordinate
  (common random numbers); the derivative in ``j`` pairs ``u(T + j)`` with
  ``u(T - j)`` on the same draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import rng as _rng
from .model import Additive, GadgetGeneral, GadgetSubmodular, Instance, Voter, _Gadget


@dataclass
class FractionalAllocation:
    """Allocation x with per-candidate floors; small candidates sit at 1.

    ``cost_large`` is kept in sync by :meth:`swap` without re-summing.
    """

    x: np.ndarray
    floors: np.ndarray
    sizes: np.ndarray
    large: np.ndarray  # bool mask of C_l
    cost_large: float = field(default=float("nan"))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if math.isnan(self.cost_large):
            self.cost_large = self.recomputed_cost()

    def recomputed_cost(self) -> float:
        return float(self.sizes[self.large] @ self.x[self.large])

    def copy(self) -> "FractionalAllocation":
        return replace(self, x=self.x.copy())

    def swap(self, up: int, down: int, delta: float) -> None:
        """Move ``delta`` units of cost from ``down`` to ``up``."""
        self.x[up] += delta / self.sizes[up]
        self.x[down] -= delta / self.sizes[down]

    def check(self, atol: float = 1e-9) -> None:
        assert np.all(self.x >= self.floors - atol), "allocation below floor"
        assert np.all(self.x <= 1 + atol), "allocation above one"
        assert abs(self.cost_large - self.recomputed_cost()) <= atol * max(1.0, self.cost_large)


def as_vector(x) -> np.ndarray:
    if isinstance(x, FractionalAllocation):
        x = x.x
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


@dataclass(frozen=True)
class EstimatorConfig:
    """Sampling budget for the multilinear estimates.

    With ``samples_H=None`` the sample count is derived from the additive
    error target: H = ceil(m^2 ln(2/fail_prob) / delta^2).
    """

    delta: float = 1e-3
    fail_prob: float = 0.01
    samples_H: int | None = None
    seed: int = 0
    exact_max_m: int = 12

    def __post_init__(self):
        if self.samples_H is not None and self.samples_H <= 0:
            raise ValueError("samples_H must be positive")
        if self.delta <= 0 or not 0 < self.fail_prob < 1:
            raise ValueError("need delta > 0 and fail_prob in (0, 1)")

    @staticmethod
    def auto_samples(m: int, delta: float, fail_prob: float) -> int:
        return math.ceil(m * m * math.log(2.0 / fail_prob) / delta**2)

    def samples(self, m: int) -> int:
        if self.samples_H is not None:
            return self.samples_H
        return self.auto_samples(m, self.delta, self.fail_prob)

    def effective_delta(self, m: int) -> float:
        """Additive error guaranteed (w.p. 1 - fail_prob) at the used H."""
        return m * math.sqrt(math.log(2.0 / self.fail_prob) / self.samples(m))

    @classmethod
    def proof(cls, n: int, m: int, eps: float, seed: int = 0, fail_prob: float = 0.01):
        return cls(delta=eps**6 / (64 * n * m**5), fail_prob=fail_prob, seed=seed)


# ---------------------------------------------------------------------------
# enumeration helpers
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def subset_bits(m: int) -> np.ndarray:
    """All 2^m committees as a (2^m, m) bool matrix, row k = binary of k."""
    codes = np.arange(1 << m, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    bits.setflags(write=False)
    return bits


def product_probs(x: np.ndarray, bits: np.ndarray) -> np.ndarray:
    return np.where(bits, x, 1.0 - x).prod(axis=1)


def exact_value_table(table: np.ndarray, x: np.ndarray) -> np.ndarray:
    """F(x) for every column of ``table`` (utilities over all 2^m subsets)."""
    return product_probs(x, subset_bits(len(x))) @ table


def exact_grad_table(table: np.ndarray, x: np.ndarray) -> np.ndarray:
    """dF/dx_j for every column of ``table``; shape (m, columns)."""
    m = len(x)
    bits = subset_bits(m)
    factors = np.where(bits, x, 1.0 - x)
    sign = np.where(bits, 1.0, -1.0)
    out = np.empty((m, table.shape[1]))
    for j in range(m):
        f = factors.copy()
        f[:, j] = 1.0
        out[j] = (f.prod(axis=1) * sign[:, j]) @ table
    return out


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def _gadget_value_grad(oracle: _Gadget, x: np.ndarray) -> tuple[float, np.ndarray]:
    m = len(x)
    grad = np.zeros(m)
    if isinstance(oracle, GadgetSubmodular):
        xf = x[oracle.favorite].sum() / oracle.favorite_size
        ys = x[oracle.second].sum() / oracle.second_size
        value = xf + oracle.z * (1 - xf) * ys
        grad[oracle.favorite] = (1 - oracle.z * ys) / oracle.favorite_size
        grad[oracle.second] = oracle.z * (1 - xf) / oracle.second_size
        return float(value), grad
    assert isinstance(oracle, GadgetGeneral)

    def all_in(idx, size):
        # probability that every member of a gadget is drawn, and its partials
        if len(idx) < size:
            return 0.0, np.zeros(len(idx))
        vals = x[idx]
        p = float(np.prod(vals))
        partial = np.array([np.prod(np.delete(vals, k)) for k in range(len(vals))])
        return p, partial

    pf, dpf = all_in(oracle.favorite, oracle.favorite_size)
    ps, dps = all_in(oracle.second, oracle.second_size)
    value = (oracle.alpha_lb + 1) * pf + ps
    grad[oracle.favorite] = (oracle.alpha_lb + 1) * dpf
    grad[oracle.second] = dps
    return float(value), grad


def closed_form(voter: Voter, x: np.ndarray) -> tuple[float, np.ndarray] | None:
    """(U, dU) when the voter's extension has a closed form, else None."""
    if isinstance(voter.oracle, Additive):
        w = voter.oracle.weights / voter.u_max
        return float(w @ x), w.copy()
    if isinstance(voter.oracle, _Gadget):
        value, grad = _gadget_value_grad(voter.oracle, x)
        return value / voter.u_max, grad / voter.u_max
    return None


def _grad_cap(voter: Voter, m: int) -> float:
    """Upper clamp on a sampled partial: the best normalised singleton."""
    if not voter.oracle.submodular:
        return math.inf
    return float(voter.values(np.eye(m, dtype=bool)).max(initial=0.0))


# ---------------------------------------------------------------------------
# single-voter API
# ---------------------------------------------------------------------------


def multilinear_value(voter: Voter, x, cfg: EstimatorConfig | None = None,
                      gen: np.random.Generator | None = None) -> float:
    """U_i(x): exact where possible, otherwise an unbiased sample mean."""
    cfg = cfg or EstimatorConfig()
    x = as_vector(x)
    cf = closed_form(voter, x)
    if cf is not None:
        return cf[0]
    m = len(x)
    if m <= cfg.exact_max_m:
        bits = subset_bits(m)
        return float(product_probs(x, bits) @ voter.values(bits))
    return sampled_value(voter, x, cfg.samples(m), gen or _rng.stream(cfg.seed, _rng.NW_SAMPLING))


def sampled_value(voter: Voter, x: np.ndarray, H: int, gen: np.random.Generator) -> float:
    if H <= 0:
        raise ValueError("sample count must be positive")
    if ((x == 0) | (x == 1)).all():
        # degenerate distribution: every draw is the same committee
        return voter.value(x == 1)
    draws = gen.random((H, len(x))) < x
    return float(voter.values(draws).mean())


def multilinear_grad(voter: Voter, x, j: int, cfg: EstimatorConfig | None = None,
                     gen: np.random.Generator | None = None) -> float:
    """dU_i/dx_j, clamped to [0, max singleton] for submodular voters."""
    cfg = cfg or EstimatorConfig()
    x = as_vector(x)
    m = len(x)
    cf = closed_form(voter, x)
    if cf is not None:
        g = cf[1][j]
    elif m <= cfg.exact_max_m:
        g = exact_grad_table(voter.values(subset_bits(m))[:, None], x)[j, 0]
    else:
        gen = gen or _rng.stream(cfg.seed, _rng.NW_SAMPLING)
        draws = gen.random((cfg.samples(m), m)) < x
        up, down = draws.copy(), draws
        up[:, j] = True
        down[:, j] = False
        g = float((voter.values(up) - voter.values(down)).mean())
    return float(min(max(g, 0.0), _grad_cap(voter, m)))


# ---------------------------------------------------------------------------
# bundle over a voter set
# ---------------------------------------------------------------------------


class NotEnoughUtility(RuntimeError):
    """A sampled U_i stayed at or below the error target after resampling."""


@dataclass
class Bundle:
    values: np.ndarray  # U_i(x), one per voter in W
    grads: np.ndarray  # dU_i/dx_j, shape (|W|, m)

    @property
    def phi(self) -> float:
        with np.errstate(divide="ignore"):
            return float(np.log(self.values).sum())

    @property
    def dphi(self) -> np.ndarray:
        """Sum over voters of (1/U_i) dU_i/dx_j."""
        return (self.grads / self.values[:, None]).sum(axis=0)


class Evaluator:
    """Evaluates U_i and dU_i for a fixed voter set, caching enumeration tables.

    ``exact`` is True when no voter needs sampling, in which case the objective
    and its gradient are deterministic.
    """

    def __init__(self, inst: Instance, W: Sequence[int], cfg: EstimatorConfig | None = None):
        self.inst = inst
        self.W = list(W)
        self.cfg = cfg or EstimatorConfig()
        m = inst.m
        voters = [inst.voters[i] for i in self.W]
        self._closed = [k for k, v in enumerate(voters) if isinstance(v.oracle, (Additive, _Gadget))]
        rest = [k for k in range(len(voters)) if k not in self._closed]
        self._enum, self._sampled = (rest, []) if m <= self.cfg.exact_max_m else ([], rest)
        self._table = None
        if self._enum:
            self._table = inst.utility_matrix(subset_bits(m), [self.W[k] for k in self._enum])
        self._caps = {k: _grad_cap(voters[k], m) for k in self._sampled}
        self.exact = not self._sampled
        self.calls = 0

    @property
    def method(self) -> str:
        if self._sampled:
            return "sampled"
        return "enumerated" if self._enum else "closed-form"

    def value_only(self, x: np.ndarray) -> np.ndarray:
        return self.bundle(x, with_grad=False).values

    def bundle(self, x, gen: np.random.Generator | None = None, with_grad: bool = True) -> Bundle:
        x = as_vector(x)
        m = len(x)
        nW = len(self.W)
        values = np.zeros(nW)
        grads = np.zeros((nW, m))
        for k in self._closed:
            v, g = closed_form(self.inst.voters[self.W[k]], x)
            values[k], grads[k] = v, g
        if self._enum:
            values[self._enum] = exact_value_table(self._table, x)
            if with_grad:
                grads[self._enum] = exact_grad_table(self._table, x).T
        if self._sampled:
            gen = gen or _rng.stream(self.cfg.seed, _rng.NW_SAMPLING, self.calls)
            self._sample_into(x, values, grads, gen, with_grad)
        self.calls += 1
        return Bundle(values, grads)

    def _sample_into(self, x, values, grads, gen, with_grad, attempts: int = 4):
        m = len(x)
        H = self.cfg.samples(m)
        delta = self.cfg.delta
        for _ in range(attempts):
            draws = gen.random((H, m)) < x
            for k in self._sampled:
                voter = self.inst.voters[self.W[k]]
                values[k] = voter.values(draws).mean()
                if with_grad:
                    up, down = draws.copy(), draws.copy()
                    for j in range(m):
                        up[:, j] = True
                        down[:, j] = False
                        g = (voter.values(up) - voter.values(down)).mean()
                        grads[k, j] = min(max(g, 0.0), self._caps[k])
                        up[:, j] = draws[:, j]
                        down[:, j] = draws[:, j]
            if (values[self._sampled] > delta).all():
                return
            H *= 2
        raise NotEnoughUtility("sampled utility did not clear the error target; floors violated?")


def nw_gradient_bundle(inst: Instance, W: Sequence[int], x, cfg: EstimatorConfig | None = None,
                       gen: np.random.Generator | None = None) -> np.ndarray:
    """Estimated d(sum_i log U_i)/dx_j for every candidate j."""
    return Evaluator(inst, W, cfg).bundle(x, gen).dphi
