"""Dense linear algebra over labeled tensor-product Hilbert spaces.

States carry an ordered tuple of :class:`SystemLabel`; every operation that
acts on a subset of systems addresses them by name.  Trace norms are
unnormalized (``||rho - sigma||_1`` ranges over ``[0, 2]``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

TAU_NORM = 1e-10
TAU_HERM = 1e-10
TAU_ISO = 1e-10
TAU_PSD = 1e-10
TAU_UHL = 1e-9
TAU_RANK = 1e-9


class StateError(ValueError):
    """Raised for malformed states, unknown labels or shape mismatches."""


@dataclass(frozen=True)
class SystemLabel:
    name: str
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise StateError(f"system {self.name!r} has dimension {self.dim} < 1")


def _as_labels(systems) -> tuple[SystemLabel, ...]:
    out = []
    for s in systems:
        if isinstance(s, SystemLabel):
            out.append(s)
        else:
            name, dim = s
            out.append(SystemLabel(str(name), int(dim)))
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise StateError(f"duplicate system labels in {names}")
    return tuple(out)


def _prod(dims: Iterable[int]) -> int:
    return int(reduce(lambda a, b: a * b, dims, 1))


class _Labeled:
    systems: tuple[SystemLabel, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.systems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.systems)

    @property
    def dim(self) -> int:
        return _prod(self.dims)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise StateError(f"unknown system label {name!r}; have {self.names}") from None

    def label(self, name: str) -> SystemLabel:
        return self.systems[self.index(name)]


class PureState(_Labeled):
    """Unit vector on a labeled tensor product."""

    def __init__(self, systems, amplitudes, *, check: bool = True):
        self.systems = _as_labels(systems)
        amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amp.size != self.dim:
            raise StateError(f"amplitude length {amp.size} != product of dims {self.dim}")
        if check and abs(np.vdot(amp, amp).real - 1.0) > TAU_NORM:
            raise StateError(f"state norm^2 {np.vdot(amp, amp).real!r} differs from 1")
        self.amplitudes = amp
        self.amplitudes.setflags(write=False)

    def __repr__(self):
        sys_ = ", ".join(f"{s.name}:{s.dim}" for s in self.systems)
        return f"PureState([{sys_}])"

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.systems, np.outer(self.amplitudes, self.amplitudes.conj()), check=False)

    def marginal(self, keep: Sequence[str]) -> "DensityOperator":
        return partial_trace(self, keep)


class DensityOperator(_Labeled):
    """Positive, unit-trace operator on a labeled tensor product."""

    def __init__(self, systems, matrix, *, check: bool = True):
        self.systems = _as_labels(systems)
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (self.dim, self.dim):
            raise StateError(f"matrix shape {m.shape} != ({self.dim}, {self.dim})")
        if check:
            if np.max(np.abs(m - m.conj().T), initial=0.0) > TAU_HERM:
                raise StateError("density matrix is not Hermitian")
            if abs(np.trace(m).real - 1.0) > TAU_NORM:
                raise StateError(f"density matrix trace {np.trace(m).real!r} differs from 1")
            lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
            if lo < -TAU_PSD:
                raise StateError(f"density matrix has eigenvalue {lo:.3e} < 0")
        self.matrix = m
        self.matrix.setflags(write=False)

    def __repr__(self):
        sys_ = ", ".join(f"{s.name}:{s.dim}" for s in self.systems)
        return f"DensityOperator([{sys_}])"

    def eigvals(self) -> np.ndarray:
        """Eigenvalues with the small negative PSD drift clamped to zero."""
        w = np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))
        return clamp_eigs(w)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def marginal(self, keep: Sequence[str]) -> "DensityOperator":
        return partial_trace(self, keep)


class IsometryMap:
    """Linear map between labeled spaces; partial isometry on its support."""

    def __init__(self, in_systems, out_systems, matrix, *, check: bool = True):
        self.in_systems = _as_labels(in_systems)
        self.out_systems = _as_labels(out_systems)
        m = np.asarray(matrix, dtype=complex)
        din = _prod(s.dim for s in self.in_systems)
        dout = _prod(s.dim for s in self.out_systems)
        if m.shape != (dout, din):
            raise StateError(f"isometry matrix shape {m.shape} != ({dout}, {din})")
        self.matrix = m
        if check:
            res = partial_isometry_residual(m)
            if res > TAU_ISO * max(1, din):
                raise StateError(f"map is not a partial isometry (residual {res:.3e})")

    @property
    def in_names(self):
        return tuple(s.name for s in self.in_systems)

    @property
    def out_names(self):
        return tuple(s.name for s in self.out_systems)

    def adjoint(self) -> "IsometryMap":
        return IsometryMap(self.out_systems, self.in_systems, self.matrix.conj().T, check=False)

    def __matmul__(self, other: "IsometryMap") -> "IsometryMap":
        if self.in_names != other.out_names:
            raise StateError(f"cannot compose: {other.out_names} -> {self.in_names}")
        return IsometryMap(other.in_systems, self.out_systems, self.matrix @ other.matrix, check=False)


def clamp_eigs(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.size and w.min() < -TAU_PSD:
        raise StateError(f"eigenvalue {w.min():.3e} below PSD tolerance")
    return np.where(w < 0, 0.0, w)


def partial_isometry_residual(m: np.ndarray) -> float:
    """``||P^2 - P||_max`` for ``P = M^dag M``; zero exactly for partial isometries."""
    p = m.conj().T @ m
    return float(np.max(np.abs(p @ p - p), initial=0.0))


# -- construction helpers ---------------------------------------------------

def basis_state(systems, digits: Sequence[int]) -> PureState:
    systems = _as_labels(systems)
    amp = np.zeros([s.dim for s in systems], dtype=complex)
    amp[tuple(digits)] = 1.0
    return PureState(systems, amp.reshape(-1))


def maximally_mixed(systems) -> DensityOperator:
    systems = _as_labels(systems)
    d = _prod(s.dim for s in systems)
    return DensityOperator(systems, np.eye(d) / d)


def max_entangled(a: SystemLabel, b: SystemLabel) -> PureState:
    """``|Phi> = d^{-1/2} sum_i |i>|i>`` on two isomorphic systems."""
    if a.dim != b.dim:
        raise StateError(f"systems {a.name}, {b.name} are not isomorphic")
    return PureState([a, b], np.eye(a.dim).reshape(-1) / np.sqrt(a.dim))


def tensor(a, b):
    """Kronecker composite; system labels are concatenated."""
    if type(a) is not type(b):
        raise StateError("tensor needs two operands of the same kind")
    clash = set(a.names) & set(b.names)
    if clash:
        raise StateError(f"label collision: {sorted(clash)}")
    systems = a.systems + b.systems
    if isinstance(a, PureState):
        return PureState(systems, np.kron(a.amplitudes, b.amplitudes), check=False)
    return DensityOperator(systems, np.kron(a.matrix, b.matrix), check=False)


def reorder(state, names: Sequence[str]):
    """Permute the tensor factors into the order given by ``names``."""
    names = list(names)
    if sorted(names) != sorted(state.names):
        raise StateError(f"reorder needs a permutation of {state.names}, got {names}")
    perm = [state.index(n) for n in names]
    systems = [state.systems[i] for i in perm]
    if isinstance(state, PureState):
        t = np.transpose(state.tensor(), perm)
        return PureState(systems, t.reshape(-1), check=False)
    n = len(perm)
    t = state.matrix.reshape(state.dims * 2)
    t = np.transpose(t, perm + [p + n for p in perm])
    return DensityOperator(systems, t.reshape(state.dim, state.dim), check=False)


def partial_trace(state, keep: Sequence[str]) -> DensityOperator:
    """Reduced operator on ``keep``, factors in the state's own order."""
    keep_set = set(keep)
    for name in keep_set:
        state.index(name)
    kept = [i for i, s in enumerate(state.systems) if s.name in keep_set]
    traced = [i for i in range(len(state.systems)) if i not in kept]
    systems = [state.systems[i] for i in kept]
    dk = _prod(state.dims[i] for i in kept)
    if isinstance(state, PureState):
        t = np.transpose(state.tensor(), kept + traced).reshape(dk, -1)
        m = t @ t.conj().T
    else:
        n = len(state.systems)
        t = state.matrix.reshape(state.dims * 2)
        t = np.transpose(t, kept + traced + [i + n for i in kept] + [i + n for i in traced])
        dt = state.dim // dk
        t = t.reshape(dk, dt, dk, dt)
        m = np.einsum("ajbj->ab", t)
    return DensityOperator(systems, m, check=False)


def as_density(state) -> DensityOperator:
    return state.density() if isinstance(state, PureState) else state


def purify(rho: DensityOperator, ref_label: SystemLabel) -> PureState:
    """Purification on ``rho.systems + [ref_label]`` from the eigendecomposition."""
    if ref_label.name in rho.names:
        raise StateError(f"label collision: {ref_label.name!r}")
    w, v = np.linalg.eigh(0.5 * (rho.matrix + rho.matrix.conj().T))
    w = clamp_eigs(w)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    rank = int(np.sum(w > TAU_RANK * max(w[0], 1e-300)))
    if ref_label.dim < rank:
        raise StateError(f"reference dimension {ref_label.dim} < rank {rank}")
    amp = np.zeros((rho.dim, ref_label.dim), dtype=complex)
    amp[:, :rank] = v[:, :rank] * np.sqrt(w[:rank])
    amp /= np.linalg.norm(amp)
    return PureState(rho.systems + (ref_label,), amp.reshape(-1))


def psd_sqrt(m: np.ndarray, floor: bool = False) -> np.ndarray:
    """Principal square root; ``floor`` zeroes eigenvalues at roundoff level."""
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = clamp_eigs(w)
    if floor and w.size:
        # eigenvalues at 1e-16 would otherwise contribute 1e-8 through the root
        w = np.where(w < 64 * np.finfo(float).eps * w.max(), 0.0, w)
    w = np.sqrt(w)
    return (v * w) @ v.conj().T


def _check_same(rho, sigma):
    if rho.dims != sigma.dims:
        raise StateError(f"dimension mismatch: {rho.dims} vs {sigma.dims}")


def fidelity(rho, sigma) -> float:
    """Squared Uhlmann fidelity ``||sqrt(rho) sqrt(sigma)||_1^2``."""
    _check_same(rho, sigma)
    if isinstance(rho, PureState) and isinstance(sigma, PureState):
        return float(abs(np.vdot(rho.amplitudes, sigma.amplitudes)) ** 2)
    if isinstance(rho, PureState):
        a = rho.amplitudes
        return float(np.real(a.conj() @ sigma.matrix @ a))
    if isinstance(sigma, PureState):
        return fidelity(sigma, rho)
    s = np.linalg.svd(psd_sqrt(rho.matrix, True) @ psd_sqrt(sigma.matrix, True), compute_uv=False)
    return float(min(1.0, s.sum() ** 2))


def trace_norm(m: np.ndarray) -> float:
    if np.allclose(m, m.conj().T, atol=1e-13):
        return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def trace_distance(rho, sigma) -> float:
    """Unnormalized ``||rho - sigma||_1``; orthogonal pure states give 2."""
    _check_same(rho, sigma)
    return trace_norm(as_density(rho).matrix - as_density(sigma).matrix)


def schatten(rho, which: str) -> float:
    """``rank0`` (relative cutoff), ``two_norm_sq`` or ``inf_norm`` of a Hermitian operator."""
    m = as_density(rho).matrix if not isinstance(rho, np.ndarray) else rho
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    top = float(np.abs(w).max(initial=0.0))
    if which == "rank0":
        return float(np.sum(np.abs(w) > TAU_RANK * top)) if top > 0 else 0.0
    if which == "two_norm_sq":
        return float(np.sum(w**2))
    if which == "inf_norm":
        return top
    raise ValueError(f"unknown Schatten quantity {which!r}")


def support_projector(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    top = np.abs(w).max(initial=0.0)
    keep = w > TAU_RANK * top if top > 0 else np.zeros_like(w, dtype=bool)
    vk = v[:, keep]
    return vk @ vk.conj().T


# -- sampling ---------------------------------------------------------------

def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary from QR of a complex Ginibre matrix with phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_pure_state(systems, rng: np.random.Generator) -> PureState:
    systems = _as_labels(systems)
    d = _prod(s.dim for s in systems)
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return PureState(systems, v / np.linalg.norm(v))


def random_density(systems, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    """Induced-measure mixed state: partial trace of a random pure state."""
    systems = _as_labels(systems)
    d = _prod(s.dim for s in systems)
    k = d if rank is None else rank
    g = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T) / np.trace(m).real
    return DensityOperator(systems, m)


def random_isometry(din: int, dout: int, rng: np.random.Generator) -> np.ndarray:
    if dout < din:
        raise StateError(f"no isometry from dimension {din} into {dout}")
    return haar_unitary(dout, rng)[:, :din]


# -- Uhlmann ----------------------------------------------------------------

def _split_matrix(state: PureState, first: Sequence[str], second: Sequence[str]) -> np.ndarray:
    perm = [state.index(n) for n in first] + [state.index(n) for n in second]
    d1 = _prod(state.dims[i] for i in perm[: len(first)])
    return np.transpose(state.tensor(), perm).reshape(d1, -1)


def max_overlap_isometry(src: PureState, tgt: PureState) -> tuple[IsometryMap, float]:
    """Map ``V: X -> Y`` maximizing ``|<tgt|(V x 1_E)|src>|``.

    ``E`` is the set of system names the two states share (in ``src`` order);
    ``X`` and ``Y`` are the remaining factors of ``src`` and ``tgt``.  The
    returned overlap squared equals the fidelity of the two ``E`` marginals.
    """
    e_names = [n for n in src.names if n in tgt.names]
    for n in e_names:
        if src.label(n).dim != tgt.label(n).dim:
            raise StateError(f"shared system {n!r} has different dimensions")
    x_names = [n for n in src.names if n not in e_names]
    y_names = [n for n in tgt.names if n not in e_names]
    a = _split_matrix(src, x_names, e_names)
    b = _split_matrix(tgt, y_names, e_names)
    dy = b.shape[0]
    sv = np.linalg.svd(a, compute_uv=False)
    src_rank = int(np.sum(sv > TAU_RANK * max(sv.max(initial=0.0), 1e-300)))
    if dy < src_rank:
        raise StateError(f"target dimension {dy} below source marginal rank {src_rank}")
    v, overlap = uhlmann_from_cross(a @ b.conj().T)
    iso = IsometryMap([src.label(n) for n in x_names], [tgt.label(n) for n in y_names], v, check=False)
    return iso, overlap


def uhlmann_from_cross(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Polar factor ``V = W U^dag`` of the cross-Gram ``M = U S W^dag``.

    ``|Tr(V M)|`` is maximal over partial isometries and equals ``||M||_1``.
    """
    u, s, wh = np.linalg.svd(m, full_matrices=False)
    v = wh.conj().T @ u.conj().T
    return v, float(abs(np.trace(v @ m)))


def apply_map(state: PureState, iso: IsometryMap, *, normalized: bool = False) -> np.ndarray | PureState:
    """Apply ``iso`` to the named factors of ``state``; output factors go last.

    Returns the raw (possibly subnormalized) tensor-ordered vector together
    with its labels as a PureState when ``normalized`` holds, else an ndarray
    whose layout is ``remaining systems + iso.out_systems``.
    """
    rest = [n for n in state.names if n not in iso.in_names]
    mat = _split_matrix(state, iso.in_names, rest)
    out = (iso.matrix @ mat)
    dout = iso.matrix.shape[0]
    out = out.reshape(dout, -1).T.reshape(-1)
    if normalized:
        systems = [state.label(n) for n in rest] + list(iso.out_systems)
        return PureState(systems, out / np.linalg.norm(out))
    return out


# -- serialization ----------------------------------------------------------

def _pairs(a: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(a).reshape(-1)]


def state_to_json(state) -> dict:
    doc = {"systems": [{"name": s.name, "dim": s.dim} for s in state.systems]}
    if isinstance(state, PureState):
        doc["amplitudes"] = _pairs(state.amplitudes)
    else:
        doc["matrix"] = _pairs(state.matrix)
    return doc


def state_from_json(doc: dict):
    systems = [SystemLabel(str(s["name"]), int(s["dim"])) for s in doc["systems"]]
    if "amplitudes" in doc:
        amp = np.array([complex(re, im) for re, im in doc["amplitudes"]])
        return PureState(systems, amp)
    if "matrix" in doc:
        flat = np.array([complex(re, im) for re, im in doc["matrix"]])
        d = _prod(s.dim for s in systems)
        return DensityOperator(systems, flat.reshape(d, d))
    raise StateError("state document needs 'amplitudes' or 'matrix'")


def load_state(path):
    with open(path) as fh:
        return state_from_json(json.load(fh))


def save_state(state, path) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_json(state), fh)
