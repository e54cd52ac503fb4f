"""Pretty good measurements, the Hayashi-Nagaoka inequality and coherification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qcore import TAU_PSD, TAU_RANK, StateError, as_density, haar_unitary, support_projector


class HypothesisError(ValueError):
    """An operator-inequality hypothesis fails; carries the offending eigenvalue."""

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(f"{message} (eigenvalue {eigenvalue:.3e})")
        self.eigenvalue = eigenvalue


def _herm(m):
    return 0.5 * (m + m.conj().T)


def pinv_sqrt(m: np.ndarray) -> np.ndarray:
    """``m^{-1/2}`` on the support of ``m``; eigenvalues below ``TAU_RANK * max`` are dropped."""
    w, v = np.linalg.eigh(_herm(m))
    top = w.max(initial=0.0)
    keep = w > TAU_RANK * top if top > 0 else np.zeros_like(w, dtype=bool)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (v * inv) @ v.conj().T


def sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(_herm(m))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


@dataclass
class PGM:
    """POVM elements ``Lambda_k = Lambda^{-1/2} Pi_k Lambda^{-1/2}`` plus an abstain element."""

    elements: list[np.ndarray]
    projectors: list[np.ndarray]
    total: np.ndarray
    abstain: np.ndarray

    @property
    def kappa(self) -> int:
        return len(self.elements)

    def completeness_residual(self) -> float:
        s = sum(self.elements) + self.abstain
        return float(np.max(np.abs(s - np.eye(s.shape[0]))))


def pgm_from_projectors(projectors: Sequence[np.ndarray]) -> PGM:
    if not projectors:
        raise ValueError("need at least one projector")
    total = sum(projectors)
    r = pinv_sqrt(total)
    elements = [_herm(r @ p @ r) for p in projectors]
    abstain = np.eye(total.shape[0]) - support_projector(total)
    return PGM(elements, list(projectors), total, abstain)


def build_pgm(states: Sequence) -> PGM:
    """PGM built from the support projectors of ``states`` (matrices or states)."""
    mats = [np.asarray(as_density(s).matrix if hasattr(s, "systems") else s) for s in states]
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise StateError(f"ensemble states live on different spaces: {shapes}")
    return pgm_from_projectors([support_projector(m) for m in mats])


def pgm_miss_prob(pgm: PGM, k: int, test_state) -> float:
    """``Tr (1 - Lambda_k) rho``; abstaining counts as a miss."""
    if not 0 <= k < pgm.kappa:
        raise IndexError(f"outcome {k} out of range for {pgm.kappa} elements")
    rho = np.asarray(as_density(test_state).matrix if hasattr(test_state, "systems") else test_state)
    return float(np.real(np.trace(rho) - np.trace(pgm.elements[k] @ rho)))


def check_hayashi(pi: np.ndarray, lam: np.ndarray) -> float:
    """Smallest eigenvalue of ``2(1-Pi) + 4(Lambda-Pi) - (1 - Lambda^{-1/2} Pi Lambda^{-1/2})``.

    Raises :class:`HypothesisError` unless ``0 <= Pi <= 1`` and ``Pi <= Lambda``.
    """
    pi, lam = _herm(np.asarray(pi, complex)), _herm(np.asarray(lam, complex))
    eye = np.eye(pi.shape[0])
    for name, op in (("Pi >= 0", pi), ("Pi <= 1", eye - pi), ("Pi <= Lambda", lam - pi)):
        lo = float(np.linalg.eigvalsh(op).min())
        if lo < -TAU_PSD:
            raise HypothesisError(f"hypothesis {name} violated", lo)
    r = pinv_sqrt(lam)
    slack = 2 * (eye - pi) + 4 * (lam - pi) - (eye - r @ pi @ r)
    return float(np.linalg.eigvalsh(_herm(slack)).min())


@dataclass
class CoherifierResult:
    isometry: np.ndarray
    phases: np.ndarray
    overlaps: np.ndarray
    mean_overlap: float
    P: float
    F: float
    chain: dict = field(default_factory=dict)

    @property
    def bound(self) -> float:
        return 1.0 - 2.0 * (self.P + np.sqrt(max(0.0, 1.0 - self.F)))

    @property
    def ok(self) -> bool:
        return self.mean_overlap >= self.bound - 1e-9


def coherify(psi: np.ndarray, unitaries: Sequence[np.ndarray], targets: Sequence[np.ndarray], pgm: PGM) -> CoherifierResult:
    """Coherent decoder ``L = sum_k alpha_k U_k^dag sqrt(Lambda_k) x |k>``.

    ``psi`` and every target are vectors on ``D x E`` with ``D`` first;
    unitaries and POVM elements act on ``D``.  Targets may be subnormalized.
    The isometry is returned as a ``(|D| kappa, |D|)`` matrix with the
    ``K`` register as the fastest index.
    """
    kappa = len(unitaries)
    if len(targets) != kappa or pgm.kappa != kappa:
        raise ValueError(f"kappa mismatch: {kappa} unitaries, {len(targets)} targets, {pgm.kappa} POVM elements")
    dd = unitaries[0].shape[0]
    psi_m = np.asarray(psi, complex).reshape(dd, -1)
    blocks = [u.conj().T @ sqrt_psd(lk) for u, lk in zip(unitaries, pgm.elements)]
    raw = np.array([np.vdot(psi_m, b @ np.asarray(t).reshape(dd, -1)) for b, t in zip(blocks, targets)])
    mag = np.abs(raw)
    phases = np.where(mag > 0, np.conj(raw) / np.where(mag > 0, mag, 1.0), 1.0)
    overlaps = (phases * raw).real

    iso = np.zeros((dd * kappa, dd), dtype=complex)
    for k, (a, b) in enumerate(zip(phases, blocks)):
        iso[k::kappa, :] = a * b

    psi_k = [u @ psi_m for u in unitaries]
    tr_psi_lam = np.array([np.real(np.vdot(pk, lk @ pk)) for pk, lk in zip(psi_k, pgm.elements)])
    fk = np.array([abs(np.vdot(pk, np.asarray(t).reshape(dd, -1))) ** 2 for pk, t in zip(psi_k, targets)])
    P = float(1.0 - tr_psi_lam.mean())
    F = float(fk.mean())

    # per-k chain: overlap >= overlap^2 >= (Tr psi_k Lambda_k)^2 - 2 sqrt(1 - F_k)
    step = (tr_psi_lam**2) - 2 * np.sqrt(np.clip(1 - fk, 0, None))
    chain = {
        "overlap_ge_overlap_sq": bool(np.all(overlaps >= overlaps**2 - 1e-12)),
        "overlap_sq_ge_step": bool(np.all(overlaps**2 >= step - 1e-9)),
        "convexity": bool(overlaps.mean() >= (1 - P) ** 2 - 2 * np.sqrt(max(0.0, 1 - F)) - 1e-9),
        "partial_isometry_residual": float(np.max(np.abs(_proj_residual(iso)))),
    }
    return CoherifierResult(iso, phases, overlaps, float(overlaps.mean()), P, F, chain)


def _proj_residual(m: np.ndarray) -> np.ndarray:
    p = m.conj().T @ m
    return p @ p - p


def random_projector(dim: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    v = haar_unitary(dim, rng)[:, :rank]
    return v @ v.conj().T


def random_hayashi_pair(dim: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``Pi`` a random projector, ``Lambda = Pi + G G^dag`` with random-rank ``G``."""
    rank = int(rng.integers(1, dim + 1))
    pi = random_projector(dim, rank, rng)
    extra = int(rng.integers(0, dim + 1))
    g = rng.standard_normal((dim, extra)) + 1j * rng.standard_normal((dim, extra))
    scale = rng.exponential(1.0)
    lam = pi + scale * (g @ g.conj().T) / max(1, dim)
    return pi, lam

