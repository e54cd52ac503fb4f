"""One-shot decoupling under Haar-random unitaries, plain and robust forms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qcore import (
    DensityOperator,
    IsometryMap,
    PureState,
    StateError,
    SystemLabel,
    as_density,
    haar_unitary,
    partial_trace,
    reorder,
    schatten,
    trace_distance,
    trace_norm,
)


def reshape_split(c: SystemLabel, s_dim: int, s_name: str = "S", b_name: str = "Bhat") -> IsometryMap:
    """Mixed-radix relabeling ``i -> (i // |Bhat|, i % |Bhat|)`` of ``C`` as ``S x Bhat``."""
    if s_dim < 1 or c.dim % s_dim:
        raise StateError(f"s_dim={s_dim} does not divide |{c.name}|={c.dim}")
    b_dim = c.dim // s_dim
    return IsometryMap([c], [SystemLabel(s_name, s_dim), SystemLabel(b_name, b_dim)], np.eye(c.dim))


def _ce_matrix(state, c_name: str) -> tuple[np.ndarray, list[str]]:
    rho = as_density(state)
    e_names = [n for n in rho.names if n != c_name]
    rho = reorder(rho, [c_name, *e_names])
    return rho.matrix, e_names


def decouple_residual(psi_ce, u: np.ndarray, w: IsometryMap, c_name: str | None = None) -> float:
    """``|| (W U psi U^dag W^dag)^{Bhat E} - pi^Bhat x psi^E ||_1``.

    ``c_name`` defaults to the single input system of ``w``.
    """
    c_name = c_name or w.in_names[0]
    m, e_names = _ce_matrix(psi_ce, c_name)
    dc = as_density(psi_ce).label(c_name).dim
    if u.shape != (dc, dc):
        raise StateError(f"unitary shape {u.shape} does not match |C|={dc}")
    if len(w.out_systems) != 2:
        raise StateError("split map must output exactly (S, Bhat)")
    ds, db = w.out_systems[0].dim, w.out_systems[1].dim
    de = m.shape[0] // dc
    g = np.kron(w.matrix @ u, np.eye(de))
    out = (g @ m @ g.conj().T).reshape(ds, db * de, ds, db * de)
    marg = np.einsum("iaib->ab", out)
    psi_e = np.einsum("iaib->ab", m.reshape(dc, de, dc, de))
    return trace_norm(marg - np.kron(np.eye(db) / db, psi_e))


def _averaged_residual(psi_ce, unitaries, w: IsometryMap, c_name: str) -> float:
    m, _ = _ce_matrix(psi_ce, c_name)
    dc = unitaries[0].shape[0]
    de = m.shape[0] // dc
    ds, db = w.out_systems[0].dim, w.out_systems[1].dim
    acc = np.zeros((db * de, db * de), dtype=complex)
    for u in unitaries:
        g = np.kron(w.matrix @ u, np.eye(de))
        out = (g @ m @ g.conj().T).reshape(ds, db * de, ds, db * de)
        acc += np.einsum("iaib->ab", out)
    acc /= len(unitaries)
    psi_e = np.einsum("iaib->ab", m.reshape(dc, de, dc, de))
    return trace_norm(acc - np.kron(np.eye(db) / db, psi_e))


def decoupling_bound_sq(phi_ce, c_name: str, s_dim: int) -> float:
    """``|C| ||phi^E||_0 ||phi^{CE}||_2^2 / |S|^2`` (bounds the mean squared residual)."""
    rho = as_density(phi_ce)
    dc = rho.label(c_name).dim
    e_names = [n for n in rho.names if n != c_name]
    rank_e = schatten(partial_trace(rho, e_names), "rank0") if e_names else 1.0
    return dc * rank_e * schatten(rho, "two_norm_sq") / s_dim**2


@dataclass
class DecoupleSpec:
    """Inputs for a decoupling experiment.

    ``psi`` is the true state on ``C`` plus environment, ``phi`` a nearby
    state whose norms enter the bound, ``eps`` the promised trace distance.
    """

    psi: DensityOperator | PureState
    c_name: str
    s_dim: int
    phi: DensityOperator | PureState | None = None
    eps: float = 0.0
    split: IsometryMap | None = None

    def __post_init__(self):
        if self.phi is None:
            self.phi = self.psi
        c = as_density(self.psi).label(self.c_name)
        if self.split is None:
            self.split = reshape_split(c, self.s_dim)
        if self.split.out_systems[0].dim * self.split.out_systems[1].dim != c.dim:
            raise StateError("split does not factor |C| exactly")
        dist = trace_distance(self.psi, self.phi)
        if dist > self.eps + 1e-10:
            raise StateError(f"||psi - phi||_1 = {dist:.3e} exceeds eps = {self.eps}")

    @property
    def c_dim(self) -> int:
        return as_density(self.psi).label(self.c_name).dim


@dataclass
class DecoupleReport:
    lhs_estimate: float
    lhs_stderr: float
    bound: float
    trials: int
    seed: int | None
    mean_residual: float
    mean_sq_residual: float
    mean_sq_stderr: float
    bound_sq: float
    residuals: list[float] = field(repr=False, default_factory=list)

    def robust_ok(self, sigmas: float = 3.0) -> bool:
        return self.lhs_estimate - sigmas * self.lhs_stderr <= self.bound

    def mean_square_ok(self, sigmas: float = 3.0) -> bool:
        """Mean squared residual not above the bound at ``sigmas`` standard errors."""
        return self.mean_sq_residual - sigmas * self.mean_sq_stderr <= self.bound_sq

    def to_dict(self) -> dict:
        return {
            "lhs_estimate": self.lhs_estimate,
            "lhs_stderr": self.lhs_stderr,
            "robust_bound": self.bound,
            "mean_residual": self.mean_residual,
            "mean_sq_residual": self.mean_sq_residual,
            "mean_sq_stderr": self.mean_sq_stderr,
            "mean_square_bound_sq": self.bound_sq,
            "trials": self.trials,
            "seed": self.seed,
            "robust_ok_3sigma": self.robust_ok(),
            "mean_square_ok_3sigma": self.mean_square_ok(),
        }


def trial_generators(rng: np.random.Generator | int, trials: int) -> list[np.random.Generator]:
    """Independent per-trial streams, reproducible from the master generator or seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return rng.spawn(trials)


def verify_decoupling(spec: DecoupleSpec, trials: int, rng, seed: int | None = None) -> DecoupleReport:
    """Monte-Carlo estimate of both decoupling bounds.

    Residuals of ``psi`` are averaged for the robust statement; residuals of
    ``phi`` are squared and averaged for the non-robust one.  The state
    average over the sampled unitaries gives ``lhs_estimate``; its stderr is
    that of the per-trial residuals, which upper-bound it by convexity.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    gens = trial_generators(rng, trials)
    us = [haar_unitary(spec.c_dim, g) for g in gens]
    res_psi = np.array([decouple_residual(spec.psi, u, spec.split, spec.c_name) for u in us])
    if spec.phi is spec.psi:
        res_phi = res_psi
    else:
        res_phi = np.array([decouple_residual(spec.phi, u, spec.split, spec.c_name) for u in us])
    sq = res_phi**2
    sd = lambda x: float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else float("inf")
    bound_sq = decoupling_bound_sq(spec.phi, spec.c_name, spec.s_dim)
    return DecoupleReport(
        lhs_estimate=_averaged_residual(spec.psi, us, spec.split, spec.c_name),
        lhs_stderr=sd(res_psi),
        bound=2 * spec.eps + float(np.sqrt(bound_sq)),
        trials=trials,
        seed=seed,
        mean_residual=float(res_psi.mean()),
        mean_sq_residual=float(sq.mean()),
        mean_sq_stderr=sd(sq),
        bound_sq=bound_sq,
        residuals=res_psi.tolist(),
    )
