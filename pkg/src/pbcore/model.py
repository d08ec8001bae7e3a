"""Instances, utility oracles and the JSON instance format.

Candidates are addressed by dense integer indices assigned in file order.
Committees are boolean masks over those indices; every oracle evaluates a
single mask (``value``) or a stack of masks (``values``) so that sampling and
exhaustive enumeration stay vectorised.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.01
ATOL = 1e-9


class InstanceError(ValueError):
    """Raised for unparsable or invalid instance data."""


# ---------------------------------------------------------------------------
# utility oracles
# ---------------------------------------------------------------------------


def _as_masks(masks: np.ndarray) -> tuple[np.ndarray, bool]:
    masks = np.asarray(masks, dtype=bool)
    single = masks.ndim == 1
    return np.atleast_2d(masks), single


def _row_sums(masks: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # one reduction order for single masks and stacks alike, so that a
    # committee's value never depends on how it was batched
    return np.where(masks, weights, 0.0).sum(axis=1)


@dataclass(frozen=True, eq=False)
class Additive:
    """u(T) = sum of per-candidate weights over T."""

    weights: np.ndarray

    kind = "additive"
    submodular = True

    def values(self, masks: np.ndarray) -> np.ndarray:
        masks, _ = _as_masks(masks)
        return _row_sums(masks, self.weights)

    def value(self, mask: np.ndarray) -> float:
        return float(self.values(mask)[0])

    def singletons(self) -> np.ndarray:
        return self.weights.copy()

    def scaled(self, factor: float) -> "Additive":
        return Additive(self.weights / factor)


@dataclass(frozen=True, eq=False)
class Coverage:
    """Weight of the union of elements covered by the chosen candidates.

    ``covers`` is a boolean (m, E) incidence matrix and ``element_weights``
    holds the E non-negative element weights.
    """

    covers: np.ndarray
    element_weights: np.ndarray
    element_names: tuple[str, ...] = ()

    kind = "coverage"
    submodular = True

    def values(self, masks: np.ndarray) -> np.ndarray:
        masks, _ = _as_masks(masks)
        hit = (masks.astype(np.int32) @ self.covers.astype(np.int32)) > 0
        return _row_sums(hit, self.element_weights)

    def value(self, mask: np.ndarray) -> float:
        return float(self.values(mask)[0])

    def singletons(self) -> np.ndarray:
        return self.covers.astype(float) @ self.element_weights

    def scaled(self, factor: float) -> "Coverage":
        return Coverage(self.covers, self.element_weights / factor, self.element_names)


@dataclass(frozen=True, eq=False)
class _Gadget:
    favorite: np.ndarray  # candidate indices of the favorite gadget
    second: np.ndarray
    favorite_size: int
    second_size: int

    def fractions(self, masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        masks, _ = _as_masks(masks)
        x = masks[:, self.favorite].sum(axis=1) / self.favorite_size
        y = masks[:, self.second].sum(axis=1) / self.second_size
        return x, y

    def value(self, mask: np.ndarray) -> float:
        return float(self.values(mask)[0])

    def from_counts(self, cf: np.ndarray, cs: np.ndarray) -> np.ndarray:
        return self._combine(np.asarray(cf) / self.favorite_size, np.asarray(cs) / self.second_size)

    def values(self, masks: np.ndarray) -> np.ndarray:
        return self._combine(*self.fractions(masks))

    def singletons(self) -> np.ndarray:
        m = int(max(self.favorite.max(initial=-1), self.second.max(initial=-1))) + 1
        return self.values(np.eye(m, dtype=bool))

    def scaled(self, factor: float):
        # gadget utilities are used on their native scale
        return self


@dataclass(frozen=True, eq=False)
class GadgetSubmodular(_Gadget):
    """u(E) = x + z (1 - x) y with x, y the covered fractions of the two gadgets."""

    z: float = 0.5

    kind = "gadget_submodular"
    submodular = True

    def _combine(self, x, y):
        return x + self.z * (1.0 - x) * y


@dataclass(frozen=True, eq=False)
class GadgetGeneral(_Gadget):
    """u(E) = (alpha_lb + 1) [x = 1] + [y = 1]; monotone but supermodular."""

    alpha_lb: float = 1.0

    kind = "gadget_general"
    submodular = False

    def _combine(self, x, y):
        return (self.alpha_lb + 1.0) * (np.asarray(x) >= 1.0) + (np.asarray(y) >= 1.0) * 1.0


UtilityOracle = Union[Additive, Coverage, GadgetSubmodular, GadgetGeneral]


def normalizer(oracle: UtilityOracle) -> float:
    """Scale dividing the raw utility: the best singleton for additive and
    coverage voters, 1 for gadget voters (whose singletons may all be zero)."""
    if isinstance(oracle, _Gadget):
        return 1.0
    return float(np.max(oracle.singletons(), initial=0.0))


# ---------------------------------------------------------------------------
# instance
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Voter:
    id: str
    oracle: UtilityOracle
    u_max: float

    def values(self, masks: np.ndarray) -> np.ndarray:
        return self.oracle.values(masks) / self.u_max

    def value(self, mask: np.ndarray) -> float:
        return self.oracle.value(mask) / self.u_max

    @property
    def is_additive(self) -> bool:
        return isinstance(self.oracle, Additive)


def normalize_voter(voter: Voter) -> Voter:
    """Fold the normaliser into the oracle; normalising twice is a no-op."""
    return Voter(voter.id, voter.oracle.scaled(voter.u_max), 1.0)


@dataclass(frozen=True, eq=False)
class Instance:
    candidate_ids: tuple[str, ...]
    sizes: np.ndarray
    budget: float
    voters: tuple[Voter, ...]
    epsilon: float = DEFAULT_EPSILON
    dropped_voters: tuple[str, ...] = ()
    dropped_candidates: tuple[str, ...] = ()
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index.update({c: k for k, c in enumerate(self.candidate_ids)})

    @property
    def m(self) -> int:
        return len(self.candidate_ids)

    @property
    def n(self) -> int:
        return len(self.voters)

    def index(self, cid: str) -> int:
        try:
            return self._index[cid]
        except KeyError:
            raise InstanceError(f"unknown candidate id {cid!r}") from None

    def mask(self, ids: Iterable[str]) -> np.ndarray:
        out = np.zeros(self.m, dtype=bool)
        for cid in ids:
            out[self.index(cid)] = True
        return out

    def ids(self, mask: np.ndarray) -> list[str]:
        return [self.candidate_ids[k] for k in np.flatnonzero(mask)]

    def cost(self, mask: np.ndarray) -> float:
        return float(np.asarray(mask, dtype=bool) @ self.sizes)

    def utility_matrix(self, masks: np.ndarray, voters: Sequence[int] | None = None) -> np.ndarray:
        """Normalised utilities, shape (len(masks), n_voters)."""
        idx = range(self.n) if voters is None else voters
        return np.stack([self.voters[i].values(masks) for i in idx], axis=1)

    @property
    def all_additive(self) -> bool:
        return all(v.is_additive for v in self.voters)

    @property
    def all_submodular(self) -> bool:
        return all(v.oracle.submodular for v in self.voters)


def evaluate(voter: Voter, committee: Iterable[str] | np.ndarray, inst: Instance | None = None) -> float:
    """Normalised utility of ``voter`` for a committee given as ids or a mask."""
    if isinstance(committee, np.ndarray) and committee.dtype == bool:
        return voter.value(committee)
    if inst is None:
        raise InstanceError("candidate ids need the instance to resolve them")
    return voter.value(inst.mask(committee))


@dataclass(frozen=True)
class CandidatePartition:
    small: frozenset[int]
    large: frozenset[int]
    threshold: float

    def large_mask(self, m: int) -> np.ndarray:
        out = np.zeros(m, dtype=bool)
        out[list(self.large)] = True
        return out

    def small_mask(self, m: int) -> np.ndarray:
        return ~self.large_mask(m)


def partition_candidates(inst: Instance) -> CandidatePartition:
    """Split into small candidates (size <= eps*b/m), always selected, and the rest."""
    threshold = inst.epsilon * inst.budget / inst.m
    small = frozenset(int(k) for k in np.flatnonzero(inst.sizes <= threshold))
    large = frozenset(range(inst.m)) - small
    return CandidatePartition(small, large, threshold)


# ---------------------------------------------------------------------------
# construction / (de)serialisation
# ---------------------------------------------------------------------------


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(f"{what} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise InstanceError(f"{what} must be finite")
    return value


def _build_oracle(spec: dict, index: dict[str, int], m: int, vid: str,
                  dropped: frozenset = frozenset()) -> UtilityOracle:
    if not isinstance(spec, dict) or "type" not in spec:
        raise InstanceError(f"voter {vid}: utility must be an object with a 'type'")
    kind = spec["type"]

    def known(cid):
        if not isinstance(cid, str):
            raise InstanceError(f"voter {vid}: candidate ids must be strings")
        if cid not in index and cid not in dropped:
            raise InstanceError(f"voter {vid}: unknown candidate id {cid!r}")
        return cid in index

    if kind == "additive":
        weights = np.zeros(m)
        for cid, w in dict(spec.get("weights", {})).items():
            w = _number(w, f"voter {vid} weight")
            if w < 0:
                raise InstanceError(f"voter {vid}: negative weight for {cid}")
            if known(cid):
                weights[index[cid]] = w
        return Additive(weights)
    if kind == "coverage":
        uw = spec.get("universe_weights")
        covers = spec.get("covers")
        if not isinstance(uw, dict) or not isinstance(covers, dict):
            raise InstanceError(f"voter {vid}: coverage needs 'universe_weights' and 'covers'")
        names = tuple(uw)
        pos = {e: k for k, e in enumerate(names)}
        weights = np.array([_number(uw[e], f"voter {vid} element weight") for e in names])
        if (weights < 0).any():
            raise InstanceError(f"voter {vid}: negative element weight")
        inc = np.zeros((m, len(names)), dtype=bool)
        for cid, elems in covers.items():
            if not known(cid):
                continue
            for e in elems:
                if e not in pos:
                    raise InstanceError(f"voter {vid}: element {e!r} not in universe")
                inc[index[cid], pos[e]] = True
        return Coverage(inc, weights, names)
    if kind in ("gadget_submodular", "gadget_general"):
        fav, sec = spec.get("favorite"), spec.get("second")
        if not isinstance(fav, list) or not isinstance(sec, list) or not fav or not sec:
            raise InstanceError(f"voter {vid}: gadget needs non-empty 'favorite' and 'second'")
        if set(fav) & set(sec):
            raise InstanceError(f"voter {vid}: favorite and second gadgets overlap")
        f_idx = np.array([index[c] for c in fav if known(c)], dtype=int)
        s_idx = np.array([index[c] for c in sec if known(c)], dtype=int)
        if kind == "gadget_submodular":
            z = _number(spec.get("z"), f"voter {vid} z")
            if not 0 < z < 1:
                raise InstanceError(f"voter {vid}: z must lie in (0, 1)")
            return GadgetSubmodular(f_idx, s_idx, len(fav), len(sec), z=z)
        a = _number(spec.get("alpha_lb"), f"voter {vid} alpha_lb")
        if a <= 0:
            raise InstanceError(f"voter {vid}: alpha_lb must be positive")
        return GadgetGeneral(f_idx, s_idx, len(fav), len(sec), alpha_lb=a)
    raise InstanceError(f"voter {vid}: unknown utility type {kind!r}")


def instance_from_dict(data: dict) -> Instance:
    """Validate and normalise a parsed instance document."""
    if not isinstance(data, dict):
        raise InstanceError("instance must be a JSON object")
    for key in ("budget", "candidates", "voters"):
        if key not in data:
            raise InstanceError(f"missing required field {key!r}")
    budget = _number(data["budget"], "budget")
    if budget <= 0:
        raise InstanceError("budget must be positive")
    epsilon = _number(data.get("epsilon", DEFAULT_EPSILON), "epsilon")
    if not 0 < epsilon < 1 / 20:
        raise InstanceError("epsilon must lie in (0, 1/20)")

    cands = data["candidates"]
    if not isinstance(cands, list) or not cands:
        raise InstanceError("candidates must be a non-empty list")
    ids, sizes, dropped_c = [], [], []
    seen = set()
    for c in cands:
        if not isinstance(c, dict) or not isinstance(c.get("id"), str):
            raise InstanceError(f"bad candidate entry {c!r}")
        cid = c["id"]
        if cid in seen:
            raise InstanceError(f"duplicate candidate id {cid!r}")
        seen.add(cid)
        s = _number(c.get("size"), f"size of {cid}")
        if s <= 0:
            raise InstanceError(f"non-positive size for candidate {cid!r}")
        if s > budget:
            logger.warning("dropping candidate %s: size %g exceeds budget %g", cid, s, budget)
            dropped_c.append(cid)
            continue
        ids.append(cid)
        sizes.append(s)
    if not ids:
        raise InstanceError("no candidates fit within the budget")
    index = {c: k for k, c in enumerate(ids)}

    voters_raw = data["voters"]
    if not isinstance(voters_raw, list):
        raise InstanceError("voters must be a list")
    voters, dropped_v = [], []
    full = np.ones(len(ids), dtype=bool)
    for k, v in enumerate(voters_raw):
        if not isinstance(v, dict):
            raise InstanceError(f"bad voter entry {v!r}")
        vid = str(v.get("id", f"v{k + 1}"))
        oracle = _build_oracle(v.get("utility"), index, len(ids), vid, frozenset(dropped_c))
        if oracle.value(full) <= 0:
            dropped_v.append(vid)
            continue
        voters.append(Voter(vid, oracle, normalizer(oracle)))
    if not voters:
        raise InstanceError("no voters after filtering")
    return Instance(tuple(ids), np.array(sizes, dtype=float), budget, tuple(voters), epsilon,
                    tuple(dropped_v), tuple(dropped_c))


def load_instance(path: str | Path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: parse error: {exc}") from exc
    return instance_from_dict(data)


def _oracle_to_dict(oracle: UtilityOracle, ids: Sequence[str]) -> dict:
    if isinstance(oracle, Additive):
        return {"type": "additive",
                "weights": {ids[k]: float(w) for k, w in enumerate(oracle.weights) if w != 0}}
    if isinstance(oracle, Coverage):
        names = oracle.element_names or tuple(f"e{k}" for k in range(len(oracle.element_weights)))
        return {"type": "coverage",
                "universe_weights": {e: float(w) for e, w in zip(names, oracle.element_weights)},
                "covers": {ids[k]: [names[e] for e in np.flatnonzero(row)]
                           for k, row in enumerate(oracle.covers) if row.any()}}
    out = {"type": oracle.kind,
           "favorite": [ids[k] for k in oracle.favorite],
           "second": [ids[k] for k in oracle.second]}
    if isinstance(oracle, GadgetSubmodular):
        out["z"] = oracle.z
    else:
        out["alpha_lb"] = oracle.alpha_lb
    return out


def instance_to_dict(inst: Instance) -> dict:
    return {
        "budget": inst.budget,
        "epsilon": inst.epsilon,
        "candidates": [{"id": c, "size": float(s)} for c, s in zip(inst.candidate_ids, inst.sizes)],
        "voters": [{"id": v.id, "utility": _oracle_to_dict(v.oracle, inst.candidate_ids)}
                   for v in inst.voters],
    }


def dump_instance(inst: Instance, path: str | Path | None = None) -> str:
    text = json.dumps(instance_to_dict(inst), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def make_instance(sizes: Sequence[float], budget: float, oracles: Sequence[UtilityOracle],
                  epsilon: float = DEFAULT_EPSILON, candidate_ids: Sequence[str] | None = None,
                  voter_ids: Sequence[str] | None = None) -> Instance:
    """Build an instance directly from index-based oracles (no file round trip)."""
    m = len(sizes)
    cids = tuple(candidate_ids or (f"c{k + 1}" for k in range(m)))
    vids = list(voter_ids or (f"v{i + 1}" for i in range(len(oracles))))
    return instance_from_dict({
        "budget": budget, "epsilon": epsilon,
        "candidates": [{"id": c, "size": float(s)} for c, s in zip(cids, sizes)],
        "voters": [{"id": vid, "utility": _oracle_to_dict(o, cids)} for vid, o in zip(vids, oracles)],
    })
