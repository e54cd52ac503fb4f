"""Entanglement-assisted simulation bound ``F <= |Q|/|K|`` and the operational SSA audit."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import floor
from typing import Sequence

import numpy as np

from .entropy import Partition, _require_pure, _Roles
from .qcore import TAU_ISO, StateError, random_isometry

TAU_ENT = 1e-9


def _tp_residual(kraus: Sequence[np.ndarray]) -> float:
    s = sum(k.conj().T @ k for k in kraus)
    return float(np.max(np.abs(s - np.eye(s.shape[0]))))


def stinespring_kraus(v: np.ndarray, dout: int) -> list[np.ndarray]:
    """Kraus operators ``(1_out x <i|_env) V`` of an isometry ``V: in -> out x env``."""
    din = v.shape[1]
    if v.shape[0] % dout:
        raise ValueError(f"isometry output {v.shape[0]} is not a multiple of {dout}")
    v3 = v.reshape(dout, v.shape[0] // dout, din)
    return [v3[:, i, :] for i in range(v3.shape[1])]


def random_channel(din: int, dout: int, rng: np.random.Generator, env: int | None = None) -> list[np.ndarray]:
    """Trace-preserving channel from a Haar-random Stinespring isometry."""
    env = env or -(-din // dout)
    env = max(env, -(-din // dout))
    return stinespring_kraus(random_isometry(din, dout * env, rng), dout)


def schmidt_coefficients(psi: np.ndarray, dl: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(lambda, U, Vh)`` with ``psi = sum sqrt(lambda_l) U[:, l] x Vh[l, :]`` on ``L x L'``."""
    m = np.asarray(psi, complex).reshape(dl, -1)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    return s**2, u, vh


@dataclass
class AssistedSimulation:
    """Encoder ``E: K x L -> Q`` and decoder ``D: Q x L' -> K`` with Schmidt weights ``lambda``.

    Kraus matrices act on the ordered tensor factors given; ``L`` and ``L'``
    are written in the Schmidt bases of the assistance state.
    """

    encoder: list[np.ndarray]
    decoder: list[np.ndarray]
    lam: np.ndarray
    k_dim: int
    q_dim: int

    def __post_init__(self):
        self.lam = np.asarray(self.lam, float)
        dl = len(self.lam)
        if abs(self.lam.sum() - 1.0) > 1e-10 or np.any(self.lam < -1e-15):
            raise StateError("Schmidt weights must be a probability vector")
        for e in self.encoder:
            if e.shape != (self.q_dim, self.k_dim * dl):
                raise StateError(f"encoder Kraus shape {e.shape} != ({self.q_dim}, {self.k_dim * dl})")
        for d in self.decoder:
            if d.shape != (self.k_dim, self.q_dim * dl):
                raise StateError(f"decoder Kraus shape {d.shape} != ({self.k_dim}, {self.q_dim * dl})")
        for name, kr in (("encoder", self.encoder), ("decoder", self.decoder)):
            r = _tp_residual(kr)
            if r > 1e3 * TAU_ISO:
                raise StateError(f"{name} is not trace preserving (residual {r:.2e})")

    @property
    def l_dim(self) -> int:
        return len(self.lam)

    def encoder_blocks(self) -> np.ndarray:
        """``E[i, l] = E_i (1_K x |l>)`` with shape ``(n_E, |L|, |Q|, |K|)``."""
        return np.stack([e.reshape(self.q_dim, self.k_dim, self.l_dim).transpose(2, 0, 1) for e in self.encoder])

    def decoder_blocks(self) -> np.ndarray:
        """``D[j, l] = D_j (1_Q x |l>)`` with shape ``(n_D, |L|, |K|, |Q|)``."""
        return np.stack([d.reshape(self.k_dim, self.q_dim, self.l_dim).transpose(2, 0, 1) for d in self.decoder])

    @classmethod
    def from_state(cls, encoder, decoder, psi: np.ndarray, k_dim: int, q_dim: int, l_dim: int):
        """Rotate ``L``, ``L'`` into the Schmidt bases of an arbitrary pure ``psi`` on ``L x L'``."""
        lam, u, vh = schmidt_coefficients(psi, l_dim)
        if vh.shape[1] != l_dim:
            raise StateError("assistance state must have |L| = |L'|")
        # pad the Schmidt bases to full unitaries when psi is not full rank
        u = _complete(u)
        v = _complete(vh.T)
        lam = np.concatenate([lam, np.zeros(l_dim - len(lam))])
        enc = [e @ np.kron(np.eye(k_dim), u) for e in encoder]
        dec = [d @ np.kron(np.eye(q_dim), v) for d in decoder]
        return cls(enc, dec, lam, k_dim, q_dim)


def _complete(cols: np.ndarray) -> np.ndarray:
    d, r = cols.shape
    if r == d:
        return cols
    q, _ = np.linalg.qr(np.hstack([cols, np.eye(d, dtype=complex)]))
    out = q[:, :d].copy()
    out[:, :r] = cols
    return out


def compose_assisted(sim: AssistedSimulation) -> list[np.ndarray]:
    """Kraus list ``N_ij = sum_l sqrt(lambda_l) D_jl E_il`` of the simulated channel on ``K``."""
    eb, db = sim.encoder_blocks(), sim.decoder_blocks()
    w = np.sqrt(sim.lam)
    n = np.einsum("l,jlkq,ilqm->ijkm", w, db, eb)
    return [n[i, j] for i in range(n.shape[0]) for j in range(n.shape[1])]


def block_residuals(sim: AssistedSimulation) -> dict[str, float]:
    """Deviation of ``sum_i E_il^dag E_il'`` and ``sum_j D_jl^dag D_jl'`` from ``delta_ll' 1``."""
    eb, db = sim.encoder_blocks(), sim.decoder_blocks()
    ge = np.einsum("ilqk,imqn->lkmn", eb.conj(), eb)
    gd = np.einsum("ilkq,imkp->lqmp", db.conj(), db)
    ide = np.einsum("lm,kn->lkmn", np.eye(sim.l_dim), np.eye(sim.k_dim))
    idd = np.einsum("lm,qp->lqmp", np.eye(sim.l_dim), np.eye(sim.q_dim))
    return {"encoder": float(np.max(np.abs(ge - ide))), "decoder": float(np.max(np.abs(gd - idd)))}


def entanglement_fidelity(kraus: Sequence[np.ndarray], k_dim: int) -> float:
    """``(1/|K|^2) sum |Tr N|^2``."""
    for n in kraus:
        if n.shape != (k_dim, k_dim):
            raise StateError(f"Kraus block shape {n.shape} is not ({k_dim}, {k_dim})")
    return float(sum(abs(np.trace(n)) ** 2 for n in kraus) / k_dim**2)


def entanglement_fidelity_direct(kraus: Sequence[np.ndarray], k_dim: int) -> float:
    """``<Phi| (1 x N)(Phi) |Phi>`` from the output state itself."""
    phi = np.eye(k_dim).reshape(-1) / np.sqrt(k_dim)
    out = np.zeros((k_dim**2, k_dim**2), dtype=complex)
    for n in kraus:
        g = np.kron(np.eye(k_dim), n)
        out += g @ np.outer(phi, phi) @ g.conj().T
    return float(np.real(phi @ out @ phi))


@dataclass
class FidelityAudit:
    entanglement_fidelity: float
    fidelity_direct: float
    bound: float
    trace_sum: float
    cs_bound: float
    blockwise_sum: float
    kraus_identity_residuals: dict = field(default_factory=dict)
    channel_tp_residual: float = 0.0

    @property
    def ok(self) -> bool:
        return self.entanglement_fidelity <= self.bound + TAU_ENT

    @property
    def paths_agree(self) -> float:
        return abs(self.entanglement_fidelity - self.fidelity_direct)

    def to_dict(self) -> dict:
        return {
            "entanglement_fidelity": self.entanglement_fidelity,
            "fidelity_direct": self.fidelity_direct,
            "entfid_bound": self.bound,
            "trace_sum": self.trace_sum,
            "cauchy_schwarz_bound": self.cs_bound,
            "blockwise_sum": self.blockwise_sum,
            "kraus_identity_residuals": self.kraus_identity_residuals,
            "channel_tp_residual": self.channel_tp_residual,
            "ok": self.ok,
        }


def audit_simulation(sim: AssistedSimulation) -> FidelityAudit:
    kraus = compose_assisted(sim)
    eb, db = sim.encoder_blocks(), sim.decoder_blocks()
    # per-l traces without the sqrt(lambda) cross terms
    tr = np.einsum("jlkq,ilqk->ijl", db, eb)
    blockwise = float(np.sum(sim.lam * np.abs(tr) ** 2))
    f = entanglement_fidelity(kraus, sim.k_dim)
    return FidelityAudit(
        entanglement_fidelity=f,
        fidelity_direct=entanglement_fidelity_direct(kraus, sim.k_dim),
        bound=sim.q_dim / sim.k_dim,
        trace_sum=f * sim.k_dim**2,
        cs_bound=float(sim.q_dim * sim.k_dim),
        blockwise_sum=blockwise,
        kraus_identity_residuals=block_residuals(sim),
        channel_tp_residual=_tp_residual(kraus),
    )


def random_simulation(k_dim: int, q_dim: int, rng: np.random.Generator, l_dim: int | None = None,
                      maximally_entangled: bool = False) -> AssistedSimulation:
    """Stinespring-random encoder and decoder with a sampled assistance state."""
    l_dim = l_dim or int(rng.integers(1, 5))
    enc = random_channel(k_dim * l_dim, q_dim, rng)
    dec = random_channel(q_dim * l_dim, k_dim, rng)
    if maximally_entangled:
        return AssistedSimulation(enc, dec, np.full(l_dim, 1.0 / l_dim), k_dim, q_dim)
    g = rng.standard_normal(l_dim * l_dim) + 1j * rng.standard_normal(l_dim * l_dim)
    return AssistedSimulation.from_state(enc, dec, g / np.linalg.norm(g), k_dim, q_dim, l_dim)


def fidelity_bound_audit(k_dim: int, q_dim: int, trials: int, rng, **kw) -> dict:
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    audits = [audit_simulation(random_simulation(k_dim, q_dim, g, **kw)) for g in rng.spawn(trials)]
    f = np.array([a.entanglement_fidelity for a in audits])
    return {
        "k_dim": k_dim,
        "q_dim": q_dim,
        "trials": trials,
        "entfid_bound": q_dim / k_dim,
        "max_fidelity": float(f.max()),
        "violations": int(sum(not a.ok for a in audits)),
        "max_path_gap": float(max(a.paths_agree for a in audits)),
        "max_trace_sum_over_cs": float(max(a.trace_sum / a.cs_bound for a in audits)),
        "max_block_residual": float(max(max(a.kraus_identity_residuals.values()) for a in audits)),
        "max_blockwise_gap": float(max(abs(a.trace_sum - a.blockwise_sum) for a in audits)),
    }


def ssa_operational_audit(psi, partition: Partition, n: int = 10, delta: float = 0.01) -> dict:
    """Finite-``n`` dimensions of the qubit-channel simulation implied by redistribution.

    ``|Q| = 2^floor(n I(C;RB)/2 + n delta)`` qubits simulate ``|K| = 2^floor(n I(C;B)/2)``
    with entanglement assistance, so ``F <= |Q|/|K|``.  A negative ``I(C;R|B)``
    would make that ratio vanish with ``n`` while the protocol keeps fidelity
    near 1.
    """
    psi = _require_pure(psi)
    partition.validate(psi)
    h = _Roles(psi, partition)
    i_crb = h.I("C", "R", "B")
    i_c_rb, i_c_b = h.I("C", "RB"), h.I("C", "B")
    q_exp = floor(n * i_c_rb / 2 + n * delta)
    k_exp = floor(n * i_c_b / 2)
    trend = [floor(m * i_c_rb / 2 + m * delta) - floor(m * i_c_b / 2) for m in range(1, n + 1)]
    return {
        "I(C;R|B)": i_crb,
        "qubit_gap": 0.5 * i_c_rb - 0.5 * i_c_b,
        "n": n,
        "delta": delta,
        "log2_Q": q_exp,
        "log2_K": k_exp,
        "entfid_bound": 2.0 ** (q_exp - k_exp),
        "log2_ratio_by_n": trend,
        "saturated": bool(abs(i_crb) <= TAU_ENT),
        "ssa_ok": bool(i_crb >= -TAU_ENT),
    }
