"""One-shot state redistribution, typical projectors and the i.i.d. experiment.

States enter as role tensors ``T[a, c, b, r]`` (each role's systems merged
into one axis, empty roles have dimension 1).  Alice holds ``A C`` and half
``Ahat`` of a maximally entangled pair, Bob holds ``B`` and ``Bhat``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, floor, log2

import numpy as np

from .discern import coherify, pgm_from_projectors
from .entropy import Partition, rate_region
from .qcore import (
    TAU_RANK,
    DensityOperator,
    PureState,
    StateError,
    haar_unitary,
    partial_isometry_residual,
    trace_norm,
    uhlmann_from_cross,
)
from . import resources as rs

TYPICAL_CAP = 2**12
_BAND_SLACK = 1e-12


def role_tensor(state: PureState, partition: Partition) -> np.ndarray:
    """Amplitudes reshaped to ``(|A|, |C|, |B|, |R|)``."""
    partition.validate(state)
    order = [n for r in "ACBR" for n in partition.role(r)]
    perm = [state.index(n) for n in order]
    dims = [int(np.prod([state.label(n).dim for n in partition.role(r)])) for r in "ACBR"]
    return np.transpose(state.tensor(), perm).reshape(dims)


def pure_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Trace norm ``|| |x><x| - |y><y| ||_1 = 2 sqrt(1 - |<x|y>|^2)`` for unit vectors."""
    x, y = x.ravel(), y.ravel()
    # 1 - |<x|y>|^2 as the squared norm of y's component orthogonal to x (no cancellation)
    perp = y - x * np.vdot(x, y)
    return float(2.0 * np.linalg.norm(perp))


def _spectrum(t: np.ndarray, first: str) -> np.ndarray:
    """Marginal spectrum on the roles in ``first`` (subset of 'acbr') of a pure role tensor."""
    roles = "acbr"
    keep = [roles.index(x) for x in first]
    rest = [i for i in range(4) if i not in keep]
    m = np.transpose(t, keep + rest).reshape(int(np.prod([t.shape[i] for i in keep])), -1)
    s = np.linalg.svd(m, compute_uv=False) ** 2
    return s


def _rank(w: np.ndarray) -> int:
    top = w.max(initial=0.0)
    return int(np.sum(w > TAU_RANK * top)) if top > 0 else 0


@dataclass
class RedistInstance:
    psi: np.ndarray
    varphi: np.ndarray
    chi: np.ndarray
    b_hat_dim: int
    kappa: int
    eps: float

    def __post_init__(self):
        for name in ("psi", "varphi", "chi"):
            t = np.asarray(getattr(self, name), dtype=complex)
            if t.ndim != 4:
                raise StateError(f"{name} must be a role tensor (a, c, b, r)")
            nrm = np.linalg.norm(t)
            if abs(nrm - 1.0) > 1e-9:
                raise StateError(f"{name} is not normalized (norm {nrm:.3e})")
            setattr(self, name, t)
        if self.psi.shape != self.varphi.shape or self.psi.shape != self.chi.shape:
            raise StateError("auxiliary states live on different spaces")
        if self.kappa < 1:
            raise StateError("kappa must be >= 1")
        if self.b_hat_dim < 1 or self.c_dim % self.b_hat_dim:
            raise StateError(f"|Bhat|={self.b_hat_dim} does not divide |C|={self.c_dim}")
        for name in ("varphi", "chi"):
            d = pure_distance(self.psi, getattr(self, name))
            if d > self.eps + 1e-10:
                raise StateError(f"||psi - {name}||_1 = {d:.3e} exceeds eps = {self.eps}")

    @classmethod
    def from_states(cls, psi: PureState, partition: Partition, b_hat_dim: int, kappa: int,
                    eps: float = 0.0, varphi: PureState | None = None, chi: PureState | None = None):
        t = role_tensor(psi, partition)
        tv = role_tensor(varphi, partition) if varphi is not None else t
        tc = role_tensor(chi, partition) if chi is not None else t
        return cls(t, tv, tc, b_hat_dim, kappa, eps)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return tuple(self.psi.shape)

    @property
    def c_dim(self) -> int:
        return self.psi.shape[1]

    @property
    def s_dim(self) -> int:
        return self.c_dim // self.b_hat_dim

    def eta_terms(self) -> dict:
        """The three summands of eta plus the square-root decoupling variant."""
        c, s = self.c_dim, self.s_dim
        rank_br = _rank(_spectrum(self.varphi, "br"))
        two_cbr = float(np.sum(_spectrum(self.varphi, "a") ** 2))
        rank_cb = _rank(_spectrum(self.chi, "cb"))
        inf_b = float(_spectrum(self.chi, "b").max())
        x = c * rank_br * two_cbr / s**2
        terms = {
            "eps_term": 6.0 * np.sqrt(self.eps),
            "decoupling_term": 4.0 * x**0.25,
            "packing_term": 4.0 * self.kappa * rank_cb * inf_b / c,
        }
        return {
            **terms,
            "eta_eq": float(sum(terms.values())),
            "decoupling_ratio": x,
            "robust_bound": 2.0 * self.eps + float(np.sqrt(x)),
            "norms": {"rank0_varphi_BR": rank_br, "two_norm_sq_varphi_CBR": two_cbr,
                      "rank0_chi_CB": rank_cb, "inf_norm_chi_B": inf_b},
        }


@dataclass
class RedistOutcome:
    encoders: list[np.ndarray] = field(repr=False)
    decoder: np.ndarray = field(repr=False)
    unitaries: list[np.ndarray] = field(repr=False)
    achieved_mean_overlap: float
    eta: float
    eta_terms: dict
    F_k: np.ndarray
    F_ave: float
    P_ave: float
    P_coherify: float
    D_ave: float
    packing_sum: float
    coherify_mean_overlap: float
    chain: dict
    ghz_overlap: float | None = None
    global_trace_distance: float | None = None

    @property
    def one_shot_rhs(self) -> float:
        return 1.0 - 2.0 * self.eta

    @property
    def applicable(self) -> bool:
        return self.eta < 0.5

    @property
    def one_shot_ok(self) -> bool:
        """The one-shot inequality (vacuously true when eta >= 1/2)."""
        return (not self.applicable) or self.achieved_mean_overlap >= self.one_shot_rhs - 1e-9

    def to_dict(self) -> dict:
        d = {
            "achieved_mean_overlap": self.achieved_mean_overlap,
            "one_shot_rhs": self.one_shot_rhs,
            "eta_eq": self.eta,
            "eta_terms": {k: v for k, v in self.eta_terms.items() if k != "eta_eq"},
            "eta_below_half": self.applicable,
            "one_shot_ok": self.one_shot_ok,
            "F_ave": self.F_ave,
            "F_k": [float(x) for x in self.F_k],
            "P_ave": self.P_ave,
            "P_coherify": self.P_coherify,
            "D_ave": self.D_ave,
            "packing_sum": self.packing_sum,
            "coherify_bound": 1.0 - 2.0 * (self.P_coherify + np.sqrt(max(0.0, 1.0 - self.F_ave))),
            "coherify_overlap": self.coherify_mean_overlap,
            "chain": self.chain,
        }
        if self.ghz_overlap is not None:
            d["ghz_overlap"] = self.ghz_overlap
        if self.global_trace_distance is not None:
            d["global_trace_distance"] = self.global_trace_distance
            d["global_sqrt_eta_bound"] = 2.0 * float(np.sqrt(self.eta))
        return d


def _encoder(psi: np.ndarray, psi_k: np.ndarray, bh: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Uhlmann isometry ``V_k: AS -> Ahat A C`` and the received state ``psi'_k``.

    Returns ``(V_k, psi'_k, overlap)`` where ``psi'_k`` is the role tensor of
    ``V_k^dag (|Phi>^{Ahat Bhat} |psi>)`` with ``S Bhat`` merged back into ``C``.
    """
    a, c, b, r = psi.shape
    s = c // bh
    k5 = psi_k.reshape(a, s, bh, b, r)
    cross = np.einsum("xsybr,acbr->xsyac", k5, psi.conj()) / np.sqrt(bh)
    v, overlap = uhlmann_from_cross(cross.reshape(a * s, bh * a * c))
    v4 = v.reshape(bh, a, c, a, s)
    out = np.einsum("yacxs,acbr->xsybr", v4.conj(), psi) / np.sqrt(bh)
    return v, out.reshape(a, c, b, r), overlap


def _chi_support(chi: np.ndarray) -> np.ndarray:
    a, c, b, r = chi.shape
    m = np.transpose(chi, (1, 2, 0, 3)).reshape(c * b, a * r)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    w = s**2
    keep = w > TAU_RANK * w.max(initial=0.0)
    return u[:, keep] @ u[:, keep].conj().T


def _cb_first(t: np.ndarray) -> np.ndarray:
    a, c, b, r = t.shape
    return np.transpose(t, (1, 2, 0, 3)).reshape(c * b, a * r)


def run_one_shot(inst: RedistInstance, rng, *, ghz: bool = False, global_check_dim: int = 256) -> RedistOutcome:
    """Build and evaluate the randomized one-shot protocol on ``inst``."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    a, c, b, r = inst.dims
    kappa, bh = inst.kappa, inst.b_hat_dim
    gens = rng.spawn(kappa)
    us = [haar_unitary(c, g) for g in gens]
    psi = inst.psi

    encoders, received, overlaps_enc = [], [], []
    for u in us:
        psi_k = np.einsum("xy,aybr->axbr", u, psi)
        v, out, ov = _encoder(psi, psi_k, bh)
        encoders.append(v.conj().T)
        received.append(out)
        overlaps_enc.append(ov)

    ideal = [np.einsum("xy,aybr->axbr", u, psi) for u in us]
    f_direct = np.array([abs(np.vdot(p, q)) ** 2 for p, q in zip(ideal, received)])
    f_uhl = np.array(overlaps_enc) ** 2

    # PGM on the rotated supports of chi^{CB}
    pi = _chi_support(inst.chi)
    eye_b = np.eye(b)
    d_units = [np.kron(u, eye_b) for u in us]
    projectors = [g @ pi @ g.conj().T for g in d_units]
    pgm = pgm_from_projectors(projectors)

    psi_d = _cb_first(psi)
    coh = coherify(psi_d, d_units, [_cb_first(t) for t in received], pgm)
    decoder = coh.isometry

    # end-to-end overlap, evaluated from the decoder output
    dd = c * b
    terms = []
    outputs = []
    for k, t in enumerate(received):
        o = (decoder @ _cb_first(t)).reshape(dd, kappa, -1)
        outputs.append(o)
        terms.append(np.vdot(psi_d, o[:, k, :]))
    terms = np.array(terms)
    mean_overlap = float(terms.real.mean())

    # diagnostics along the error analysis
    chi_k = [np.einsum("xy,aybr->axbr", u, inst.chi) for u in us]
    chi_d = [_cb_first(t) for t in chi_k]
    recv_d = [_cb_first(t) for t in received]

    def tr(op, vec):
        return float(np.real(np.vdot(vec, op @ vec)))

    p_recv = np.array([np.vdot(x, x).real - tr(lk, x) for lk, x in zip(pgm.elements, recv_d)])
    p_chi = np.array([1.0 - tr(lk, x) for lk, x in zip(pgm.elements, chi_d)])
    d_k = 2.0 * np.sqrt(np.clip(1.0 - f_direct, 0.0, None)) + inst.eps
    hay_k = np.array([
        2.0 * (1.0 - tr(projectors[k], chi_d[k]))
        + 4.0 * sum(tr(projectors[j], chi_d[k]) for j in range(kappa) if j != k)
        for k in range(kappa)
    ])
    pack = np.array([sum(tr(projectors[j], chi_d[k]) for j in range(kappa) if j != k) for k in range(kappa)])

    f_ave, d_ave, p_ave = float(f_direct.mean()), float(d_k.mean()), float(p_recv.mean())
    terms_eta = inst.eta_terms()
    tol = 1e-9
    chain = {
        "F_uhlmann_vs_direct": float(np.max(np.abs(f_uhl - f_direct))),
        "encoder_partial_isometry_residual": float(max(partial_isometry_residual(e) for e in encoders)),
        "decoder_contraction_excess": float(max(0.0, np.linalg.norm(decoder, 2) - 1.0)),
        "coherify_vs_end_to_end": float(abs(coh.mean_overlap - mean_overlap)),
        "D_ave_le_eps_plus_2sqrt": bool(d_ave <= inst.eps + 2 * np.sqrt(max(0.0, 1 - f_ave)) + tol),
        "P_ave_le_D_plus_miss": bool(p_ave <= d_ave + p_chi.mean() + tol),
        "miss_le_hayashi": bool(np.all(p_chi <= hay_k + tol)),
        "hayashi_eq_packing": float(np.max(np.abs(hay_k - 4.0 * pack))),
        "coherify": coh.chain,
        "coherify_ok": bool(coh.ok),
        "coherify_unencoded_form": bool(mean_overlap >= 1 - 2 * (p_ave + np.sqrt(max(0.0, 1 - f_ave))) - tol),
    }

    ghz_ov = None
    if ghz:
        ghz_ov = _ghz_overlap(psi_d, outputs, kappa)

    gdist = None
    if a * c * b * r <= global_check_dim:
        dim = a * c * b * r
        omega = np.zeros((dim, dim), dtype=complex)
        for o in outputs:
            for j in range(kappa):
                vec = o[:, j, :].reshape(-1)
                omega += np.outer(vec, vec.conj())
        omega /= kappa
        target = psi_d.reshape(-1)
        gdist = trace_norm(omega - np.outer(target, target.conj()))

    return RedistOutcome(
        encoders=encoders,
        decoder=decoder,
        unitaries=us,
        achieved_mean_overlap=mean_overlap,
        eta=terms_eta["eta_eq"],
        eta_terms=terms_eta,
        F_k=f_direct,
        F_ave=f_ave,
        P_ave=p_ave,
        P_coherify=coh.P,
        D_ave=d_ave,
        packing_sum=float(4.0 * pack.mean()),
        coherify_mean_overlap=coh.mean_overlap,
        chain=chain,
        ghz_overlap=ghz_ov,
        global_trace_distance=gdist,
    )


def _ghz_overlap(psi_d: np.ndarray, outputs: list[np.ndarray], kappa: int) -> float:
    """``<Gamma|<psi|Omega>`` with ``Omega`` built from a controlled encoder on ``R' K_in``."""
    dd, e = psi_d.shape
    omega = np.zeros((kappa, kappa, dd, kappa, e), dtype=complex)  # R', K_in, D, K_out, E
    for k, o in enumerate(outputs):
        omega[k, k] = o / np.sqrt(kappa)
    gamma = np.zeros((kappa, kappa, kappa))
    for k in range(kappa):
        gamma[k, k, k] = 1.0 / np.sqrt(kappa)
    val = np.einsum("pqk,de,pqdke->", gamma, psi_d.conj(), omega)
    return float(val.real)


# -- typical projectors -------------------------------------------------------

@dataclass
class TypicalProjector:
    n: int
    delta: float
    eigvals: np.ndarray
    eigvecs: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    log_probs: np.ndarray = field(repr=False)
    H: float

    @property
    def d(self) -> int:
        return len(self.eigvals)

    @property
    def trace(self) -> int:
        return int(self.mask.sum())

    @property
    def captured(self) -> float:
        """``Tr Pi rho^{x n}``."""
        return float(np.exp2(self.log_probs[self.mask]).sum())

    def projected_spectrum(self) -> np.ndarray:
        """Spectrum of the normalized state ``Pi rho^{x n} Pi / Tr(Pi rho^{x n})``."""
        p = np.exp2(self.log_probs[self.mask])
        return p / p.sum() if p.size else p

    def matrix(self, max_dim: int = 2**10) -> np.ndarray:
        dim = self.d**self.n
        if dim > max_dim:
            raise StateError(f"refusing to build a {dim}x{dim} projector (max {max_dim})")
        vn = np.ones((1, 1), dtype=complex)
        for _ in range(self.n):
            vn = np.kron(vn, self.eigvecs)
        keep = vn[:, self.mask.ravel()]
        return keep @ keep.conj().T


def _eig_desc(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    order = np.argsort(w)[::-1]
    return np.clip(w[order], 0.0, None), v[:, order]


def typical_projector(rho, n: int, delta: float, cap: int = TYPICAL_CAP) -> TypicalProjector:
    """Entropy-typical projector of ``rho^{x n}``.

    Keeps the product eigenvectors whose eigenvalue ``p`` satisfies
    ``|-(1/n) log2 p - H(rho)| <= delta``.
    """
    m = np.asarray(rho.matrix if isinstance(rho, DensityOperator) else rho, dtype=complex)
    d = m.shape[0]
    if n < 1:
        raise ValueError("n must be >= 1")
    if d**n > cap:
        raise StateError(f"|rho|^n = {d}^{n} exceeds cap {cap}")
    w, v = _eig_desc(m)
    w = w / w.sum()
    with np.errstate(divide="ignore"):
        lw = np.where(w > 0, np.log2(np.where(w > 0, w, 1.0)), -np.inf)
    h = float(-np.sum(w[w > 0] * lw[w > 0]))
    lp = np.zeros(())
    for _ in range(n):
        lp = lp[..., None] + lw
    rate = -lp / n
    mask = np.isfinite(lp) & (np.abs(rate - h) <= delta + _BAND_SLACK)
    return TypicalProjector(n, float(delta), w, v, mask, lp, h)


def binomial_oracle(p: float, n: int, delta: float) -> tuple[int, float]:
    """Trace and captured weight for ``diag(1-p, p)`` by enumeration over symbol counts."""
    q = 1.0 - p
    h = -(q * log2(q) + p * log2(p))
    trace, captured = 0, 0.0
    for k in range(n + 1):
        rate = -((n - k) * log2(q) + k * log2(p)) / n
        if abs(rate - h) <= delta + _BAND_SLACK:
            trace += comb(n, k)
            captured += comb(n, k) * q ** (n - k) * p**k
    return trace, captured


def typicality_bounds_audit(rho, n: int, delta: float, cap: int = TYPICAL_CAP) -> dict:
    """Trace and Schatten-norm windows of the typical projection, with log2 margins."""
    tp = typical_projector(rho, n, delta, cap)
    h, nd = tp.H, n * delta
    lo_tr, hi_tr = 2.0 ** (n * h - nd), 2.0 ** (n * h + nd)
    spec = tp.projected_spectrum()
    rep = {
        "n": n,
        "delta": delta,
        "H": h,
        "trace": tp.trace,
        "captured": tp.captured,
        "abort_probability": 1.0 - tp.captured,
        "trace_lower": lo_tr,
        "trace_upper": hi_tr,
        "trace_ok": bool(tp.trace > 0 and lo_tr * (1 - 1e-12) <= tp.trace <= hi_tr * (1 + 1e-12)),
    }
    if spec.size == 0:
        rep.update(empty=True, norms_ok=False)
        return rep
    vals = {
        "rank0": (float(spec.size), n * h - nd, n * h + nd),
        "two_norm_sq": (float(np.sum(spec**2)), -n * h - nd, -n * h + nd),
        "inf_norm": (float(spec.max()), -n * h - nd, -n * h + nd),
    }
    ok = True
    for name, (val, lo, hi) in vals.items():
        lv = log2(val)
        margin = min(lv - lo, hi - lv)
        good = margin >= -1e-9
        ok &= good
        rep[name] = {"value": val, "log2": lv, "log2_window": [lo, hi], "margin": margin, "ok": bool(good)}
    rep["empty"] = False
    rep["norms_ok"] = bool(ok)
    return rep


# -- i.i.d. experiment --------------------------------------------------------

def _single_marginal(t: np.ndarray, roles: str) -> np.ndarray:
    keep = ["acbr".index(x) for x in roles]
    rest = [i for i in range(4) if i not in keep]
    m = np.transpose(t, keep + rest).reshape(int(np.prod([t.shape[i] for i in keep])), -1)
    return m @ m.conj().T


class _Copies:
    """``psi^{x n}`` stored with axes ``(a1, c1, b1, r1, ..., an, cn, bn, rn)``."""

    def __init__(self, t: np.ndarray, n: int):
        self.single = t
        self.n = n
        x = np.ones(())
        for _ in range(n):
            x = np.multiply.outer(x, t)
        self.data = x

    def axes(self, roles: str) -> list[int]:
        return [4 * i + "acbr".index(x) for i in range(self.n) for x in roles]

    def project(self, x: np.ndarray, roles: str, tp: TypicalProjector) -> np.ndarray:
        """Apply the typical projector of the ``roles`` marginal to every copy block."""
        ax = self.axes(roles)
        rest = [i for i in range(x.ndim) if i not in ax]
        g = tp.d
        y = np.transpose(x, ax + rest)
        shape_rest = y.shape[len(ax):]
        y = y.reshape((g,) * self.n + shape_rest)
        vh = tp.eigvecs.conj().T
        for i in range(self.n):
            y = np.moveaxis(np.tensordot(vh, y, axes=([1], [i])), 0, i)
        y = y * tp.mask.reshape(tp.mask.shape + (1,) * len(shape_rest))
        for i in range(self.n):
            y = np.moveaxis(np.tensordot(tp.eigvecs, y, axes=([1], [i])), 0, i)
        y = y.reshape([x.shape[i] for i in ax] + list(shape_rest))
        return np.transpose(y, np.argsort(ax + rest))

    def restrict_c(self, x: np.ndarray, tp: TypicalProjector) -> np.ndarray:
        """Role tensor ``(a^n, |C_delta|, b^n, r^n)`` in the typical C eigenbasis."""
        n = self.n
        a, c, b, r = self.single.shape
        vh = tp.eigvecs.conj().T
        y = x
        for ax in self.axes("c"):
            y = np.moveaxis(np.tensordot(vh, y, axes=([1], [ax])), 0, ax)
        order = self.axes("a") + self.axes("c") + self.axes("b") + self.axes("r")
        y = np.transpose(y, order).reshape(a**n, c**n, b**n, r**n)
        return y[:, tp.mask.ravel(), :, :]


def _nearest_divisor(m: int, target: float) -> int:
    divs = [d for d in range(1, m + 1) if m % d == 0]
    return min(divs, key=lambda d: (abs(log2(d) - log2(target)), -d))


def run_iid_experiment(psi_single: PureState, partition: Partition, n: int, delta: float,
                       q_rate: float, r_rate: float, rng, *, cap: int = TYPICAL_CAP,
                       ghz: bool = False) -> dict:
    """Schumacher-compress ``C``, build both auxiliary states and run the one-shot protocol on ``n`` copies."""
    t = role_tensor(psi_single, partition)
    a, c, b, r = t.shape
    if (a * c * b * r) ** n > cap:
        raise StateError(f"total dimension {(a * c * b * r)}^{n} exceeds cap {cap}")
    cp = _Copies(t, n)
    tps = {roles: typical_projector(_single_marginal(t, roles), n, delta, cap)
           for roles in ("a", "c", "b", "br", "ar")}

    tc = tps["c"]
    c_delta = tc.trace
    if c_delta == 0:
        raise StateError("typical subspace of C is empty; no valid divisor split")
    p_abort = 1.0 - tc.captured

    big = cp.project(cp.data, "c", tc)
    varphi = cp.project(cp.project(big, "a", tps["a"]), "br", tps["br"])
    chi = cp.project(cp.project(big, "ar", tps["ar"]), "b", tps["b"])

    def norm(x):
        nrm = np.linalg.norm(x)
        if nrm == 0:
            raise StateError("typical projection annihilated the state")
        return x / nrm

    Psi = norm(cp.restrict_c(big, tc))
    varphi = norm(cp.restrict_c(varphi, tc))
    chi = norm(cp.restrict_c(chi, tc))
    eps_src = 2.0 * float(np.sqrt(max(0.0, p_abort)))
    eps = max(pure_distance(Psi, varphi), pure_distance(Psi, chi))

    s_dim = _nearest_divisor(c_delta, 2.0 ** floor(n * q_rate))
    kappa = 2 ** floor(n * r_rate)
    inst = RedistInstance(Psi, varphi, chi, c_delta // s_dim, kappa, eps)
    out = run_one_shot(inst, rng, ghz=ghz)

    region = rate_region(psi_single, partition)
    i_ca = region.raw["I(C;A)"]
    fidelity = tc.captured * out.achieved_mean_overlap**2 if out.achieved_mean_overlap > 0 else 0.0
    e_in = log2(c_delta / s_dim) / n
    return {
        "n": n,
        "delta": delta,
        "C_delta": c_delta,
        "s_dim": s_dim,
        "b_hat_dim": c_delta // s_dim,
        "kappa": kappa,
        "q_realized": log2(s_dim) / n,
        "r_realized": log2(kappa) / n,
        "abort_probability": p_abort,
        "eps_source": eps_src,
        "eps_aux": eps,
        "achieved_fidelity": fidelity,
        "iid_fidelity_bound": 1.0 - eps_src - 3.0 * float(np.sqrt(out.eta)),
        "E_in": e_in,
        "E_in_reference": 0.5 * i_ca - delta + 1.0 / n,
        "one_shot": out.to_dict(),
    }


# -- assembly -----------------------------------------------------------------

def assemble_rates(psi_single, partition: Partition, tol: float = 1e-9) -> dict:
    """Replay the corner derivation with snapped rational rates and with symbolic atoms."""
    region = rate_region(psi_single, partition)
    raw = region.raw
    x, z = raw["I(C;B)"], raw["I(C;A)"]
    y = raw["I(R;C|B)"]
    snapped = {k: rs.snap(raw[k]) for k in ("I(C;RB)", "I(C;A)", "I(C;B)")}
    exact = rs.corner_derivation(snapped["I(C;RB)"], snapped["I(C;A)"], snapped["I(C;B)"])

    atoms = {"x": rs.Rate.atom("I(C;B)"), "y": rs.Rate.atom("I(C;R|B)"), "z": rs.Rate.atom("I(C;A)")}
    sym = rs.corner_derivation(
        atoms["x"] + atoms["y"], atoms["z"], atoms["x"],
        assume_q="gt" if y > tol else "le",
        assume_e="gt" if z - x > tol else "le",
    )
    env = {"I(C;B)": x, "I(C;R|B)": y, "I(C;A)": z}
    q_star, e_star = float(exact.q_star.const), float(exact.e_star.const)
    return {
        "raw": raw,
        "snapped": {k: str(v) for k, v in snapped.items()},
        "Q_star": q_star,
        "E_star": e_star,
        "Q_star_exact": str(exact.q_star),
        "E_star_exact": str(exact.e_star),
        "corner": list(region.corner),
        "corner_match": bool(abs(q_star - region.corner[0]) <= tol and abs(e_star - region.corner[1]) <= tol),
        "final": str(exact.final),
        "branches": exact.branches,
        "sublinear": list(exact.sublinear),
        "replay_ok": exact.final.verify(),
        "symbolic_final": str(sym.final),
        "symbolic_Q_star": str(sym.q_star),
        "symbolic_E_star": str(sym.e_star),
        "symbolic_replay_ok": sym.final.verify(),
        "symbolic_match": bool(abs(sym.q_star.value(env) - region.corner[0]) <= tol
                               and abs(sym.e_star.value(env) - region.corner[1]) <= tol),
        "trace": exact.trace(),
    }
