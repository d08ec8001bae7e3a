"""Exact core verification: the smallest alpha for which a committee is in
the alpha-core (with additaments), plus instance generators.

For a committee O and a deviation T every voter gets the ratio
r_i(T) = u_i(T) / max_q u_i(O + q).  A coalition of k voters can afford T iff
Cost(T) <= k b / n, so the best alpha the deviation certifies is the k(T)-th
largest ratio.  The minimum alpha of O is the maximum of that over all T.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import rng as _rng
from .model import (Additive, Coverage, GadgetGeneral, GadgetSubmodular, Instance, _Gadget,
                    make_instance)
from .multilinear import EstimatorConfig, Evaluator, as_vector

MAX_FULL_M = 24
CHUNK = 1 << 20
_COST_TOL = 1e-9


class EnumerationTooLarge(ValueError):
    def __init__(self, m: int, limit: int = MAX_FULL_M):
        super().__init__(f"full enumeration needs 2^{m} = {2.0**m:.3g} subsets (limit m <= {limit})")
        self.m = m
        self.estimate = 2**m


class ProfileError(ValueError):
    """The instance does not have the gadget shape profile enumeration needs."""


@dataclass
class DeviationCertificate:
    blocking_T: list[str]
    blocking_S: list[str]
    alpha_witnessed: float
    cost_T: float
    endowment: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["alpha_witnessed"]):
            d["alpha_witnessed"] = "inf"
        return d


def ratios(U: np.ndarray, D: np.ndarray) -> np.ndarray:
    """u/d with 0/0 -> 0 and positive/0 -> inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = U / D
    r[np.isnan(r)] = 0.0
    return r


def coalition_size(cost: np.ndarray, n: int, b: float) -> np.ndarray:
    """Smallest k with Cost <= k b / n (at least 1)."""
    return np.maximum(1, np.ceil(n * np.asarray(cost) / b - _COST_TOL)).astype(int)


def kth_largest(r: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Row-wise k-th largest of r (shape (..., n)); -inf where k > n."""
    n = r.shape[-1]
    srt = -np.sort(-r, axis=-1)
    idx = np.clip(k - 1, 0, n - 1)
    out = np.take_along_axis(srt, idx[..., None], axis=-1)[..., 0]
    return np.where(k > n, -np.inf, out)


def _mask(O) -> np.ndarray:
    return np.asarray(getattr(O, "members", O), dtype=bool)


def additament_values(inst: Instance, O) -> np.ndarray:
    """u_i(O + q) for every q; shape (m, n)."""
    O = _mask(O)
    masks = O[None, :] | np.eye(inst.m, dtype=bool)
    return inst.utility_matrix(masks)


def _certificate(inst: Instance, T: np.ndarray, r: np.ndarray, k: int, alpha: float) -> DeviationCertificate:
    order = np.argsort(-r, kind="stable")[:k]
    cost = inst.cost(T)
    return DeviationCertificate(inst.ids(T), [inst.voters[i].id for i in sorted(order)], float(alpha),
                                cost, k * inst.budget / inst.n)


def min_alpha(inst: Instance, O, enumeration: str = "full", strict_additament: bool = False,
              chunk: int = CHUNK):
    """Smallest alpha for which O is in the alpha-core.

    Returns (alpha, certificate); the certificate is the maximising deviation
    and is only returned when alpha > 1.
    """
    if enumeration == "profile":
        if strict_additament:
            raise ValueError("strict additaments need full enumeration")
        return ProfileVerifier(inst).min_alpha(O)
    if enumeration != "full":
        raise ValueError(f"unknown enumeration {enumeration!r}")
    m, n, b = inst.m, inst.n, inst.budget
    if m > MAX_FULL_M:
        raise EnumerationTooLarge(m)
    O = _mask(O)
    A = additament_values(inst, O)  # (m, n)
    base = inst.utility_matrix(O[None, :])[0]
    D = np.maximum(A.max(axis=0), base)
    best, best_T, best_r, best_k = -np.inf, None, None, 0
    shifts = np.arange(m, dtype=np.int64)
    if strict_additament:
        chunk = max(1, min(chunk, (1 << 22) // max(1, m * n)))
    for start in range(0, 1 << m, chunk):
        codes = np.arange(start, min(start + chunk, 1 << m), dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(bool)
        cost = bits @ inst.sizes
        keep = cost <= b * (1 + 1e-12)
        bits, cost = bits[keep], cost[keep]
        if not len(bits):
            continue
        U = inst.utility_matrix(bits)
        if strict_additament:
            # q restricted to T: max over q in T of u_i(O + q), or u_i(O) for empty T
            Dq = np.where(bits[:, :, None], A[None, :, :], -np.inf).max(axis=1)
            Dk = np.maximum(Dq, base[None, :])
            r = ratios(U, Dk)
        else:
            r = ratios(U, D[None, :])
        k = coalition_size(cost, n, b)
        a = kth_largest(r, k)
        j = int(np.argmax(a))
        if a[j] > best:
            best, best_T, best_r, best_k = float(a[j]), bits[j].copy(), r[j].copy(), int(k[j])
    cert = None
    if best > 1 and best_T is not None:
        cert = _certificate(inst, best_T, best_r, best_k, best)
    return best, cert


def check_certificate(inst: Instance, O, cert: DeviationCertificate, strict_additament: bool = False,
                      tol: float = 1e-9) -> bool:
    """Re-check a certificate inequality by inequality.

    At the witnessed alpha itself the weakest member of S sits exactly on the
    boundary, so each inequality is checked as u_i(T) >= alpha u_i(O + q).
    """
    O = _mask(O)
    T = inst.mask(cert.blocking_T)
    S = [next(k for k, v in enumerate(inst.voters) if v.id == vid) for vid in cert.blocking_S]
    if inst.cost(T) > len(S) * inst.budget / inst.n * (1 + 1e-12) + 1e-12:
        return False
    qs = np.flatnonzero(T) if strict_additament else range(inst.m)
    for i in S:
        v = inst.voters[i]
        uT = v.value(T)
        others = [v.value(O | np.eye(inst.m, dtype=bool)[q]) for q in qs] or [v.value(O)]
        for uq in others:
            if math.isinf(cert.alpha_witnessed):
                if not (uq == 0 and uT > 0):
                    return False
            elif uT < cert.alpha_witnessed * uq - tol * max(1.0, uT):
                return False
    return True


# ---------------------------------------------------------------------------
# profile enumeration for gadget instances
# ---------------------------------------------------------------------------


def _gadgets(inst: Instance) -> tuple[list[np.ndarray], list[tuple[int, int]]]:
    """Gadgets as candidate index arrays, and each voter's (favorite, second) gadget."""
    if not all(isinstance(v.oracle, _Gadget) for v in inst.voters):
        raise ProfileError("profile enumeration needs gadget voters only")
    if not np.allclose(inst.sizes, 1.0):
        raise ProfileError("profile enumeration needs unit candidate sizes")
    groups: dict[frozenset, int] = {}
    arrays: list[np.ndarray] = []
    owners = []
    for v in inst.voters:
        pair = []
        for idx, full in ((v.oracle.favorite, v.oracle.favorite_size), (v.oracle.second, v.oracle.second_size)):
            if len(idx) != full:
                raise ProfileError(f"voter {v.id}: gadget lost candidates during filtering")
            key = frozenset(int(c) for c in idx)
            if key not in groups:
                groups[key] = len(arrays)
                arrays.append(np.sort(np.array(sorted(key))))
            pair.append(groups[key])
        owners.append((pair[0], pair[1]))
    seen = np.zeros(inst.m, dtype=int)
    for a in arrays:
        seen[a] += 1
    if (seen != 1).any():
        raise ProfileError("gadgets must partition the candidates")
    return arrays, owners


def compositions(sizes: Sequence[int], total: int) -> np.ndarray:
    """All count vectors c with 0 <= c_g <= sizes[g] and sum c = total."""
    out = []

    def rec(g, left, acc):
        if g == len(sizes):
            if left == 0:
                out.append(tuple(acc))
            return
        rest = sum(sizes[g + 1:])
        for c in range(max(0, left - rest), min(sizes[g], left) + 1):
            acc.append(c)
            rec(g + 1, left - c, acc)
            acc.pop()

    rec(0, total, [])
    return np.array(out, dtype=int).reshape(-1, len(sizes))


class ProfileVerifier:
    """min_alpha over count profiles.

    Utilities depend only on per-gadget counts and every candidate has unit
    size, so T can be replaced by its count profile.  Raising a count never
    lowers any ratio, so for each coalition size k only profiles with the
    largest affordable total min(floor(k b / n), m) need to be scored.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        self.gadgets, self.owners = _gadgets(inst)
        self.gsizes = [len(g) for g in self.gadgets]
        n, b, m = inst.n, inst.budget, inst.m
        totals = sorted({min(math.floor(k * b / n + _COST_TOL), m) for k in range(1, n + 1)})
        self.t_profiles = np.concatenate([compositions(self.gsizes, t) for t in totals])
        self.t_cost = self.t_profiles.sum(axis=1).astype(float)
        self.t_k = coalition_size(self.t_cost, n, b)
        self.U = self.utilities(self.t_profiles)

    @property
    def profile_space(self) -> int:
        return int(np.prod([s + 1 for s in self.gsizes]))

    def utilities(self, counts: np.ndarray) -> np.ndarray:
        """Normalised utilities for count profiles, shape (P, n)."""
        counts = np.atleast_2d(counts)
        cols = []
        for v, (f, s) in zip(self.inst.voters, self.owners):
            cols.append(v.oracle.from_counts(counts[:, f], counts[:, s]) / v.u_max)
        return np.stack(cols, axis=1).astype(float)

    def counts_of(self, O) -> np.ndarray:
        O = _mask(O)
        return np.array([int(O[g].sum()) for g in self.gadgets])

    def denominators(self, o_counts: np.ndarray) -> np.ndarray:
        """max_q u_i(O + q) for a batch of profiles, shape (B, n)."""
        o_counts = np.atleast_2d(o_counts)
        best = self.utilities(o_counts)
        for g, size in enumerate(self.gsizes):
            bumped = o_counts.copy()
            bumped[:, g] = np.minimum(bumped[:, g] + 1, size)
            best = np.maximum(best, self.utilities(bumped))
        return best

    def alphas(self, o_counts: np.ndarray, batch: int = 32) -> tuple[np.ndarray, np.ndarray]:
        """min_alpha and maximising T-profile index for every row of o_counts."""
        o_counts = np.atleast_2d(o_counts)
        D = self.denominators(o_counts)
        out = np.empty(len(o_counts))
        arg = np.empty(len(o_counts), dtype=int)
        n = self.inst.n
        groups = [(k, np.flatnonzero(self.t_k == k)) for k in np.unique(self.t_k) if k <= n]
        for s in range(0, len(o_counts), batch):
            Db = D[s:s + batch, None, :]
            best = np.full(len(Db), -np.inf)
            where = np.zeros(len(Db), dtype=int)
            for k, rows in groups:
                r = ratios(self.U[None, rows, :], Db)
                a = np.partition(r, n - k, axis=-1)[..., n - k]
                j = a.argmax(axis=1)
                val = a[np.arange(len(Db)), j]
                better = val > best
                best[better], where[better] = val[better], rows[j[better]]
            out[s:s + batch], arg[s:s + batch] = best, where
        return out, arg

    def committee(self, counts: np.ndarray) -> np.ndarray:
        """A concrete committee with the given profile (lowest indices first)."""
        mask = np.zeros(self.inst.m, dtype=bool)
        for g, c in zip(self.gadgets, counts):
            mask[g[:c]] = True
        return mask

    def min_alpha(self, O):
        oc = self.counts_of(O)
        a, arg = self.alphas(oc[None, :])
        alpha = float(a[0])
        cert = None
        if alpha > 1:
            tc = self.t_profiles[arg[0]]
            T = self.committee(tc)
            r = ratios(self.U[arg[0]], self.denominators(oc)[0])
            cert = _certificate(self.inst, T, r, int(self.t_k[arg[0]]), alpha)
        return alpha, cert

    def feasible_committees(self, maximal: bool = False) -> np.ndarray:
        """Count profiles whose committee fits the budget; with ``maximal``
        only those that cannot take another candidate."""
        if maximal:
            return compositions(self.gsizes, min(math.floor(self.inst.budget + _COST_TOL), self.inst.m))
        grids = np.array(list(itertools.product(*[range(s + 1) for s in self.gsizes])), dtype=int)
        return grids[grids.sum(axis=1) <= self.inst.budget + _COST_TOL]


def min_alpha_profile(inst: Instance, O) -> float:
    return ProfileVerifier(inst).min_alpha(O)[0]


@dataclass
class LowerBoundReport:
    profiles_total: int
    feasible: int
    scored: int
    worst_alpha: float  # smallest min_alpha over feasible committees
    worst_profile: list[int]
    certificate: DeviationCertificate | None = None


def lower_bound_sweep(inst: Instance, maximal: bool = True) -> LowerBoundReport:
    """Smallest min_alpha over every feasible committee of a gadget instance.

    Growing O only lowers every ratio, so each feasible committee is bounded
    below by a maximal one containing it; ``maximal=False`` scores them all.
    """
    pv = ProfileVerifier(inst)
    feas = pv.feasible_committees()
    scored = pv.feasible_committees(maximal=True) if maximal else feas
    alphas, _ = pv.alphas(scored)
    w = int(np.argmin(alphas))
    _, cert = pv.min_alpha(pv.committee(scored[w]))
    return LowerBoundReport(pv.profile_space, len(feas), len(scored), float(alphas[w]),
                            scored[w].tolist(), cert)


# ---------------------------------------------------------------------------
# randomised fractional-core refutation
# ---------------------------------------------------------------------------


@dataclass
class FractionalCoreReport:
    probes: int
    alpha: float
    violations: list[dict] = field(default_factory=list)
    margin: float = 0.0

    @property
    def found(self) -> bool:
        return bool(self.violations)


def check_fractional_core(inst: Instance, x, W: Sequence[int], B: float, alpha: float,
                          probes: int = 1000, seed: int = 0, cfg: EstimatorConfig | None = None,
                          keep: int = 5) -> FractionalCoreReport:
    """Search for S within W and z with Cost(z) <= |S| B / |W| such that every
    voter of S has U_i(z) > alpha U_i(x).  Sound but not complete."""
    if probes < 1:
        raise ValueError("probes must be positive")
    W = list(W)
    ev = Evaluator(inst, W, cfg or EstimatorConfig())
    margin = 0.0 if ev.exact else 2 * ev.cfg.effective_delta(inst.m)
    ux = ev.value_only(as_vector(x))
    gen = _rng.stream(seed, _rng.PROBES)
    s = inst.sizes
    report = FractionalCoreReport(probes, alpha, margin=margin)
    for p in range(probes):
        size = int(gen.integers(1, len(W) + 1))
        S = np.sort(gen.choice(len(W), size=size, replace=False))
        cap = size * B / len(W)
        u = gen.random(inst.m)
        if p % 2:
            # integral probe: random order, greedy fill
            z = np.zeros(inst.m)
            left = cap
            for j in gen.permutation(inst.m):
                if s[j] <= left + 1e-12:
                    z[j] = 1.0
                    left -= s[j]
        else:
            z = np.minimum(1.0, u * gen.random() * cap / float(s @ u))
        uz = ev.value_only(z)
        if (uz[S] > alpha * ux[S] + margin).all():
            if len(report.violations) < keep:
                report.violations.append({"S": [inst.voters[W[k]].id for k in S], "z": z.tolist()})
            else:
                break
    return report


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

FAVORITE = (1, 2, 3, 4, 5, 6)
SECOND = (2, 3, 1, 5, 6, 4)
Z_STAR = (math.sqrt(689) - 17) / 10
GAP_STAR = (5 * math.sqrt(689) - 115) / 16


def gen_lower_bound(kind: str = "submodular", gadget_size: int = 5, budget: float | None = None,
                    z: float = Z_STAR, alpha_lb: float | None = None,
                    epsilon: float = 0.01) -> Instance:
    """Six voters over six gadgets in two cyclic groups of three."""
    if gadget_size < 1:
        raise ValueError("gadget_size must be at least 1")
    G = 6
    budget = G * gadget_size / 2 if budget is None else budget
    gad = [np.arange(g * gadget_size, (g + 1) * gadget_size) for g in range(G)]
    oracles = []
    for f, s in zip(FAVORITE, SECOND):
        fa, se = gad[f - 1], gad[s - 1]
        if kind == "submodular":
            oracles.append(GadgetSubmodular(fa, se, gadget_size, gadget_size, z=z))
        elif kind == "general":
            if alpha_lb is None:
                raise ValueError("kind=general needs alpha_lb")
            oracles.append(GadgetGeneral(fa, se, gadget_size, gadget_size, alpha_lb=alpha_lb))
        else:
            raise ValueError(f"unknown kind {kind!r}")
    ids = [f"g{g + 1}_{k + 1}" for g in range(G) for k in range(gadget_size)]
    return make_instance([1.0] * (G * gadget_size), budget, oracles, epsilon, ids)


def random_additive(n: int, m: int, b: float, weight_dist: str = "uniform", sizes: str = "unit",
                    seed: int = 0, density: float = 0.6, epsilon: float = 0.01) -> Instance:
    gen = _rng.stream(seed, _rng.GENERATOR)
    if weight_dist == "uniform":
        w = gen.random((n, m))
    elif weight_dist == "exponential":
        w = gen.exponential(1.0, (n, m))
    elif weight_dist == "approval":
        w = np.ones((n, m))
    else:
        raise ValueError(f"unknown weight distribution {weight_dist!r}")
    support = gen.random((n, m)) < density
    support[np.arange(n), gen.integers(0, m, n)] = True
    w = np.round(w * support, 6)
    w[(w.sum(axis=1) == 0)] = support[(w.sum(axis=1) == 0)]
    s = _sizes(gen, m, b, sizes)
    return make_instance(s, b, [Additive(row) for row in w], epsilon)


def random_coverage(n: int, m: int, b: float, universe: int = 8, density: float = 0.3,
                    sizes: str = "unit", seed: int = 0, epsilon: float = 0.01) -> Instance:
    """Candidates share one cover structure; voters weight the elements differently."""
    gen = _rng.stream(seed, _rng.GENERATOR)
    covers = gen.random((m, universe)) < density
    covers[np.arange(m), gen.integers(0, universe, m)] = True
    oracles = []
    for _ in range(n):
        ew = np.round(gen.random(universe) * (gen.random(universe) < 0.7), 6)
        if ew.sum() == 0:
            ew[gen.integers(universe)] = 1.0
        oracles.append(Coverage(covers, ew, tuple(f"e{k + 1}" for k in range(universe))))
    s = _sizes(gen, m, b, sizes)
    return make_instance(s, b, oracles, epsilon)


def _sizes(gen: np.random.Generator, m: int, b: float, kind: str) -> list[float]:
    if kind == "unit":
        return [1.0] * m
    if kind == "random":
        return np.round(gen.uniform(0.2, 1.0, m) * min(b, 2.0), 4).tolist()
    raise ValueError(f"unknown size model {kind!r}")


def probe_min_alpha(inst: Instance, O, probes: int = 2000, seed: int = 0):
    """Lower bound on min_alpha from random affordable deviations, for
    instances too large to enumerate."""
    O = _mask(O)
    D = additament_values(inst, O).max(axis=0)
    gen = _rng.stream(seed, _rng.PROBES)
    best, best_T, best_r, best_k = -np.inf, None, None, 0
    for _ in range(probes):
        T = np.zeros(inst.m, dtype=bool)
        left = inst.budget * gen.random()
        for j in gen.permutation(inst.m):
            if inst.sizes[j] <= left:
                T[j] = True
                left -= inst.sizes[j]
        r = ratios(inst.utility_matrix(T[None, :]), D[None, :])[0]
        k = coalition_size(inst.cost(T), inst.n, inst.budget)
        a = float(kth_largest(r[None, :], np.atleast_1d(k))[0])
        if a > best:
            best, best_T, best_r, best_k = a, T, r, int(k)
    cert = _certificate(inst, best_T, best_r, best_k, best) if best > 1 else None
    return best, cert
