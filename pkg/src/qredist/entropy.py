"""Entropic functionals in bits, the redistribution rate region and potentials."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .qcore import TAU_NORM, DensityOperator, PureState, StateError, partial_trace

TAU_ENT = 1e-9

ROLES = ("A", "C", "B", "R")


def _entropy_of_eigs(w: np.ndarray) -> float:
    w = w[w > 0]
    return float(-np.sum(w * np.log2(w))) if w.size else 0.0


def entropy(rho) -> float:
    """Von Neumann entropy in bits; ``0 log 0 = 0``."""
    if isinstance(rho, PureState):
        return 0.0
    return max(0.0, _entropy_of_eigs(rho.eigvals()))


def subsystem_entropy(state, labels: Sequence[str]) -> float:
    """Entropy of the marginal on ``labels``; the empty set has entropy 0."""
    labels = list(labels)
    if not labels:
        return 0.0
    if isinstance(state, PureState):
        rest = [n for n in state.names if n not in labels]
        for n in labels:
            state.index(n)
        if not rest:
            return 0.0
        # the smaller side of a pure bipartition is cheaper to diagonalize
        d_in = int(np.prod([state.label(n).dim for n in labels]))
        d_out = state.dim // d_in
        labels = rest if d_out < d_in else labels
    return entropy(partial_trace(state, labels))


def _disjoint(*groups):
    seen = set()
    for g in groups:
        g = set(g)
        if seen & g:
            raise StateError(f"overlapping label sets: {sorted(seen & g)}")
        seen |= g


def conditional_entropy(rho, a: Sequence[str], b: Sequence[str]) -> float:
    _disjoint(a, b)
    return subsystem_entropy(rho, [*a, *b]) - subsystem_entropy(rho, b)


def mutual_info(rho, a: Sequence[str], b: Sequence[str]) -> float:
    _disjoint(a, b)
    h = subsystem_entropy
    return h(rho, a) + h(rho, b) - h(rho, [*a, *b])


def cond_mutual_info(rho, a: Sequence[str], b: Sequence[str], c: Sequence[str]) -> float:
    """``I(A;B|C) = H(AC) + H(BC) - H(ABC) - H(C)``."""
    _disjoint(a, b, c)
    h = subsystem_entropy
    return h(rho, [*a, *c]) + h(rho, [*b, *c]) - h(rho, [*a, *b, *c]) - h(rho, c)


@dataclass
class EntropyReport:
    entropies: dict[frozenset, float]

    def __getitem__(self, labels) -> float:
        return self.entropies[frozenset(labels)]

    def purity_violation(self, names: Sequence[str]) -> float:
        """Largest ``|H(S) - H(complement)|``; zero for a pure global state."""
        full = frozenset(names)
        return max(abs(h - self.entropies[full - s]) for s, h in self.entropies.items())


def entropy_report(state) -> EntropyReport:
    names = state.names
    table = {frozenset(): 0.0}
    for r in range(1, len(names) + 1):
        for combo in combinations(names, r):
            table[frozenset(combo)] = subsystem_entropy(state, combo)
    return EntropyReport(table)


# -- partitions -------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Assignment of the state's systems to the roles A, C, B, R (any may be empty)."""

    A: tuple[str, ...] = ()
    C: tuple[str, ...] = ()
    B: tuple[str, ...] = ()
    R: tuple[str, ...] = ()

    @classmethod
    def from_mapping(cls, m: Mapping[str, Sequence[str]]) -> "Partition":
        bad = set(m) - set(ROLES)
        if bad:
            raise StateError(f"unknown partition roles {sorted(bad)}")
        return cls(**{k: tuple(v) for k, v in m.items()})

    def role(self, r: str) -> tuple[str, ...]:
        return getattr(self, r)

    def validate(self, state) -> None:
        used = [n for r in ROLES for n in self.role(r)]
        if len(set(used)) != len(used):
            raise StateError(f"partition roles overlap: {used}")
        if sorted(used) != sorted(state.names):
            raise StateError(f"partition {used} does not cover systems {list(state.names)} exactly")


def _require_pure(state) -> PureState | DensityOperator:
    if isinstance(state, PureState):
        return state
    resid = 1.0 - state.purity()
    if resid > TAU_NORM:
        raise StateError(f"global state is mixed (1 - Tr rho^2 = {resid:.3e})")
    return state


class _Roles:
    """Entropy lookups keyed by role strings such as ``"CB"``."""

    def __init__(self, state, part: Partition):
        self.state, self.part = state, part
        self._cache: dict[str, float] = {}

    def labels(self, roles: str) -> list[str]:
        return [n for r in roles for n in self.part.role(r)]

    def H(self, roles: str) -> float:
        key = "".join(sorted(roles))
        if key not in self._cache:
            self._cache[key] = subsystem_entropy(self.state, self.labels(roles))
        return self._cache[key]

    def I(self, x: str, y: str, z: str = "") -> float:
        return self.H(x + z) + self.H(y + z) - self.H(x + y + z) - self.H(z)


@dataclass
class RateRegion:
    """``{Q >= q_min, Q + E >= sum_min}`` with its corner point."""

    q_min: float
    sum_min: float
    corner: tuple[float, float]
    raw: dict = field(default_factory=dict)

    def contains(self, q: float, e: float, tol: float = TAU_ENT) -> bool:
        return q >= self.q_min - tol and q + e >= self.sum_min - tol


def rate_region(psi, partition: Partition) -> RateRegion:
    psi = _require_pure(psi)
    partition.validate(psi)
    h = _Roles(psi, partition)
    q_min = 0.5 * h.I("R", "C", "B")
    sum_min = h.H("CB") - h.H("B")
    e_star = 0.5 * h.I("C", "A") - 0.5 * h.I("C", "B")
    raw = {
        "I(R;C|B)": h.I("R", "C", "B"),
        "I(C;R|A)": h.I("C", "R", "A"),
        "I(C;A)": h.I("C", "A"),
        "I(C;B)": h.I("C", "B"),
        "I(C;RB)": h.I("C", "RB"),
        "H(C|B)": sum_min,
    }
    return RateRegion(q_min=q_min, sum_min=sum_min, corner=(q_min, e_star), raw=raw)


@dataclass
class PotentialSet:
    """Dynamic (D) and static (S) potentials in both transfer directions.

    ``ab`` is Alice-to-Bob, ``ba`` Bob-to-Alice.  The Bob-to-Alice dynamic
    potentials are evaluated as half the mutual information between the
    reference and Bob's holdings, and the Bob-to-Alice static potentials on
    the time-reversed configurations, so the identities below are checks
    between independently computed numbers.
    """

    D_init_ab: float
    D_final_ab: float
    S_init_ab: float
    S_final_ab: float
    D_init_ba: float
    D_final_ba: float
    S_init_ba: float
    S_final_ba: float
    H_R: float

    def identity_residuals(self) -> dict[str, float]:
        return {
            "D_ba_init = H(R) - D_ab_init": abs(self.D_init_ba - (self.H_R - self.D_init_ab)),
            "D_ba_final = H(R) - D_ab_final": abs(self.D_final_ba - (self.H_R - self.D_final_ab)),
            "S_ab_init = S_ba_final": abs(self.S_init_ab - self.S_final_ba),
            "S_ab_final = S_ba_init": abs(self.S_final_ab - self.S_init_ba),
        }

    @property
    def dynamic_drop(self) -> float:
        """``D_init - D_final`` (Alice to Bob); equals the optimal qubit rate."""
        return self.D_init_ab - self.D_final_ab

    @property
    def static_rise(self) -> float:
        """``S_final - S_init`` (Alice to Bob); equals the optimal ebit rate."""
        return self.S_final_ab - self.S_init_ab


def potentials(psi, partition: Partition) -> PotentialSet:
    psi = _require_pure(psi)
    partition.validate(psi)
    h = _Roles(psi, partition)
    return PotentialSet(
        D_init_ab=0.5 * h.I("R", "AC"),
        D_final_ab=0.5 * h.I("R", "A"),
        S_init_ab=0.5 * h.I("AC", "B"),
        S_final_ab=0.5 * h.I("A", "CB"),
        D_init_ba=0.5 * h.I("R", "B"),
        D_final_ba=0.5 * h.I("R", "CB"),
        S_init_ba=0.5 * h.I("CB", "A"),
        S_final_ba=0.5 * h.I("B", "AC"),
        H_R=h.H("R"),
    )

