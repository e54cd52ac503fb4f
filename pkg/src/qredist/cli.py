"""Command-line experiment harness.

Every subcommand writes a JSON run record (or a flattened CSV projection)
and exits with 0 on success, 2 on invalid input and 3 when an audited
inequality fails numerically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import resources as rs
from .converse import fidelity_bound_audit, ssa_operational_audit
from .decouple import DecoupleSpec, verify_decoupling
from .discern import build_pgm, check_hayashi, coherify, pgm_miss_prob, random_hayashi_pair
from .entropy import Partition, cond_mutual_info, potentials, rate_region
from .protocol import RedistInstance, assemble_rates, run_one_shot, typicality_bounds_audit
from .qcore import (
    PureState,
    StateError,
    SystemLabel,
    haar_unitary,
    load_state,
    partial_trace,
    random_density,
    random_pure_state,
    state_from_json,
)

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION = 0, 2, 3
STOCHASTIC = {"decouple", "pgm", "protocol", "converse", "ssa"}
GENERATORS = ("bell", "ghz4", "product", "random")


class ValidationError(ValueError):
    pass


# -- state generators -------------------------------------------------------

def _labels(dims, default_count: int, default_dim: int = 2) -> list[SystemLabel]:
    if dims is None:
        return [SystemLabel(f"S{i}", default_dim) for i in range(default_count)]
    return [SystemLabel(n, d) for n, d in dims]


def generate_state(name: str, dims=None, rng: np.random.Generator | None = None, factors=()) -> PureState:
    """Named fixture states.

    ``bell`` and ``ghz4`` use systems ``S0, S1, ...`` unless ``dims`` names
    them; ``product`` tensors ``factors`` (generator names or states) with
    systems renumbered in order; ``random`` is Haar-distributed on ``dims``.
    """
    if name == "bell":
        labels = _labels(dims, 2)
        if len(labels) != 2 or any(l.dim != 2 for l in labels):
            raise ValidationError("bell needs exactly two qubits")
        amp = np.zeros(4, complex)
        amp[[0, 3]] = 1 / np.sqrt(2)
        return PureState(labels, amp)
    if name == "ghz4":
        labels = _labels(dims, 4)
        if len(labels) != 4 or any(l.dim != 2 for l in labels):
            raise ValidationError("ghz4 needs exactly four qubits")
        amp = np.zeros(16, complex)
        amp[[0, 15]] = 1 / np.sqrt(2)
        return PureState(labels, amp)
    if name == "product":
        if not factors:
            raise ValidationError("product needs at least one factor")
        parts = [generate_state(f, rng=rng) if isinstance(f, str) else f for f in factors]
        amp = parts[0].amplitudes
        dims_all = list(parts[0].dims)
        for p in parts[1:]:
            amp = np.kron(amp, p.amplitudes)
            dims_all += list(p.dims)
        labels = _labels(dims, len(dims_all)) if dims else [SystemLabel(f"S{i}", d) for i, d in enumerate(dims_all)]
        if [l.dim for l in labels] != dims_all:
            raise ValidationError(f"--dims {dims} do not match product factor dims {dims_all}")
        return PureState(labels, amp)
    if name == "random":
        if dims is None:
            raise ValidationError("random state needs --dims")
        if rng is None:
            raise ValidationError("random state needs a seed")
        return random_pure_state(_labels(dims, 0), rng)
    raise ValidationError(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}")


# -- parsing helpers ----------------------------------------------------------

def parse_dims(text: str | None):
    """``"2,2,2"`` (systems S0..) or ``"C=16,E=2"`` (named)."""
    if not text:
        return None
    out = []
    for i, item in enumerate(text.split(",")):
        item = item.strip()
        name, _, val = item.rpartition("=")
        try:
            d = int(val)
        except ValueError:
            raise ValidationError(f"bad dimension {item!r}") from None
        if d < 1:
            raise ValidationError(f"dimension must be >= 1 in {item!r}")
        out.append((name or f"S{i}", d))
    return out


def parse_partition(text: str | None, state) -> Partition:
    """``A=0,C=1+2,B=S3,R=`` with system indices or names; roles may be omitted."""
    names = list(state.names)
    if not text:
        if set(names) <= set("ACBR"):
            return Partition(**{r: (r,) if r in names else () for r in "ACBR"})
        raise ValidationError("--partition is required for this state")
    roles: dict[str, tuple[str, ...]] = {}
    for item in text.split(","):
        role, eq, val = item.partition("=")
        role = role.strip()
        if not eq or role not in "ACBR" or len(role) != 1:
            raise ValidationError(f"bad partition entry {item!r}")
        sel = []
        for tok in filter(None, (t.strip() for t in val.split("+"))):
            if tok.isdigit():
                i = int(tok)
                if i >= len(names):
                    raise ValidationError(f"system index {i} out of range for {len(names)} systems")
                sel.append(names[i])
            elif tok in names:
                sel.append(tok)
            else:
                raise ValidationError(f"unknown system {tok!r} in partition")
        roles[role] = tuple(sel)
    part = Partition.from_mapping(roles)
    try:
        part.validate(state)
    except StateError as e:
        raise ValidationError(str(e)) from None
    return part


def parse_seed(value) -> int | None:
    if value is None:
        value = os.environ.get("QREDIST_SEED")
    if value is None or value == "":
        return None
    try:
        seed = int(value, 0) if isinstance(value, str) else int(value)
    except ValueError:
        raise ValidationError(f"seed must be an integer, got {value!r}") from None
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must fit in 64 unsigned bits")
    return seed


# -- run records --------------------------------------------------------------

@dataclass
class ExperimentConfig:
    subcommand: str
    state: str | None = None
    params: dict = field(default_factory=dict)
    seed: int | None = None
    format: str = "json"
    out: str | None = None


def _version() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+{desc}" if desc else __version__


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def flatten(x, prefix: str = "") -> list[tuple[str, object]]:
    if isinstance(x, dict):
        return [kv for k, v in x.items() for kv in flatten(v, f"{prefix}.{k}" if prefix else str(k))]
    if isinstance(x, list):
        return [kv for i, v in enumerate(x) for kv in flatten(v, f"{prefix}[{i}]")]
    return [(prefix, x)]


def render(record: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(record, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in flatten(record):
        w.writerow([k, v])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- subcommand bodies --------------------------------------------------------

def _streams(seed: int | None, count: int) -> list[np.random.Generator]:
    return np.random.default_rng(seed).spawn(count)


def _load(args, rng: np.random.Generator | None):
    src = args.state
    if not src:
        raise ValidationError("--state is required")
    dims = parse_dims(getattr(args, "dims", None))
    if src.startswith("gen:"):
        factors = [f for f in (getattr(args, "factors", None) or "").split(",") if f]
        return generate_state(src[4:], dims, rng, factors)
    return _read_state_file(src)


def cmd_rates(args, seed):
    st_rng, = _streams(seed, 1)
    psi = _load(args, st_rng)
    part = parse_partition(args.partition, psi)
    reg = rate_region(psi, part)
    pot = potentials(psi, part)
    payload = {
        "q_min": reg.q_min,
        "sum_min": reg.sum_min,
        "corner": {"Q_star": reg.corner[0], "E_star": reg.corner[1], "bound": "rate_region_corner"},
        "entropic": reg.raw,
        "potentials": asdict(pot),
        "potential_identity_residuals": pot.identity_residuals(),
    }
    bad = max(pot.identity_residuals().values()) > 1e-9
    return payload, bad


def _read_state_file(path: str):
    try:
        return load_state(path)
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise ValidationError(f"cannot read state file {path!r}: {e}") from None


def cmd_decouple(args, seed):
    st_rng, run_rng = _streams(seed, 2)
    psi = _load(args, st_rng)
    phi = _read_state_file(args.perturbed) if args.perturbed else None
    spec = DecoupleSpec(psi, args.c_name, args.s_dim, phi=phi, eps=args.eps)
    rep = verify_decoupling(spec, args.trials, run_rng, seed=seed)
    d = rep.to_dict()
    return d, not (rep.robust_ok() and rep.mean_square_ok())


def _ensemble_audit(path: str) -> dict:
    """Miss probabilities and operator-inequality slacks for a stored ensemble."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
        docs = doc["states"] if isinstance(doc, dict) else doc
        states = [state_from_json(d) for d in docs]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise ValidationError(f"cannot read ensemble file {path!r}: {e}") from None
    pgm = build_pgm(states)
    miss = [pgm_miss_prob(pgm, k, st) for k, st in enumerate(states)]
    slacks = [check_hayashi(p, pgm.total) for p in pgm.projectors]
    return {
        "kappa": pgm.kappa,
        "miss_probabilities": miss,
        "P_ave": float(np.mean(miss)),
        "completeness_residual": pgm.completeness_residual(),
        "hayashi_slacks": slacks,
        "bound": "hayashi_nagaoka_slack",
    }


def cmd_pgm(args, seed):
    if args.ensemble:
        payload = {"ensemble": _ensemble_audit(args.ensemble)}
        return payload, bool(min(payload["ensemble"]["hayashi_slacks"]) < -1e-9)
    hay_rng, coh_rng = _streams(seed, 2)
    slacks = []
    for g in hay_rng.spawn(args.trials):
        dim = int(g.integers(1, args.d_dim + 1))
        pi, lam = random_hayashi_pair(dim, g)
        slacks.append(check_hayashi(pi, lam))
    overlaps, bounds, viol = [], [], 0
    for g in coh_rng.spawn(args.trials):
        res = _random_coherify(g, args.d_dim, args.kappa)
        overlaps.append(res.mean_overlap)
        bounds.append(res.bound)
        viol += not res.ok
    slacks = np.array(slacks)
    payload = {
        "hayashi": {"trials": args.trials, "min_slack": float(slacks.min()), "violations": int(np.sum(slacks < -1e-9)),
                    "bound": "hayashi_nagaoka_slack"},
        "coherify": {"trials": args.trials, "violations": int(viol),
                     "min_margin": float(np.min(np.array(overlaps) - np.array(bounds))),
                     "bound": "coherification_bound"},
    }
    return payload, bool(payload["hayashi"]["violations"] or viol)


def _random_coherify(g: np.random.Generator, d_max: int, k_max: int):
    dd = int(g.integers(1, d_max + 1))
    de = int(g.integers(1, 4))
    kappa = int(g.integers(1, k_max + 1))
    psi = random_pure_state([SystemLabel("D", dd), SystemLabel("E", de)], g).amplitudes.reshape(dd, de)
    us = [haar_unitary(dd, g) for _ in range(kappa)]
    ens = [random_density([SystemLabel("D", dd)], g, rank=int(g.integers(1, dd + 1))) for _ in range(kappa)]
    pgm = build_pgm(ens)
    noise = float(g.uniform(0, 0.5))
    targets = []
    for u in us:
        pk = u @ psi
        z = g.standard_normal(pk.shape) + 1j * g.standard_normal(pk.shape)
        t = pk + noise * z / np.linalg.norm(z)
        targets.append(t / np.linalg.norm(t))
    return coherify(psi, us, targets, pgm)


def cmd_protocol(args, seed):
    st_rng, run_rng = _streams(seed, 2)
    psi = _load(args, st_rng)
    part = parse_partition(args.partition, psi)
    inst = RedistInstance.from_states(psi, part, args.bhat, args.kappa, args.eps)
    runs = []
    for g in run_rng.spawn(args.trials):
        out = run_one_shot(inst, g, ghz=args.ghz)
        runs.append(out.to_dict())
    applicable = [r for r in runs if r["eta_below_half"]]
    violations = sum(not r["one_shot_ok"] for r in runs)
    chain_fail = sum(not (r["chain"]["coherify_ok"] and r["chain"]["miss_le_hayashi"]
                          and r["chain"]["P_ave_le_D_plus_miss"]) for r in runs)
    payload = {
        "dims": dict(zip("ACBR", inst.dims)),
        "b_hat_dim": inst.b_hat_dim,
        "s_dim": inst.s_dim,
        "kappa": inst.kappa,
        "eps": inst.eps,
        "eta_eq": runs[0]["eta_eq"] if runs else None,
        "runs": runs,
        "summary": {
            "trials": len(runs),
            "eta_below_half_runs": len(applicable),
            "one_shot_violations": violations,
            "chain_failures": chain_fail,
            "mean_overlap": float(np.mean([r["achieved_mean_overlap"] for r in runs])) if runs else None,
        },
    }
    return payload, bool(violations or chain_fail)


def cmd_types(args, seed):
    if args.diag:
        try:
            w = np.array([float(x) for x in args.diag.split(",")])
        except ValueError:
            raise ValidationError(f"bad --diag {args.diag!r}") from None
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise ValidationError("--diag must be a probability vector")
        rho = np.diag(w).astype(complex)
    else:
        st_rng, = _streams(seed, 1)
        st = _load(args, st_rng)
        keep = args.system.split("+") if args.system else list(st.names)
        try:
            rho = partial_trace(st, keep).matrix
        except (StateError, ValueError) as e:
            raise ValidationError(str(e)) from None
    rep = typicality_bounds_audit(rho, args.n, args.delta)
    return rep, not (rep["trace_ok"] and rep["norms_ok"])


def cmd_assemble(args, seed):
    st_rng, = _streams(seed, 1)
    psi = _load(args, st_rng)
    part = parse_partition(args.partition, psi)
    rep = assemble_rates(psi, part)
    return rep, not (rep["corner_match"] and rep["replay_ok"] and rep["symbolic_replay_ok"])


def cmd_resources(args, seed):
    if args.check:
        try:
            d = rs.parse_ri(args.check)
        except (rs.ResourceSyntaxError, ValueError) as e:
            raise ValidationError(str(e)) from None
        norm = rs.normalize(d)
        return {"input": args.check, "canonical": str(d), "normalized": str(norm),
                "asymptotic": d.asymptotic, "axiom": rs.is_axiom(d) or rs.is_axiom(norm)}, False
    if args.derive == "corner":
        st_rng, = _streams(seed, 1)
        psi = _load(args, st_rng)
        part = parse_partition(args.partition, psi)
        rep = assemble_rates(psi, part)
        keys = ("final", "Q_star_exact", "E_star_exact", "branches", "sublinear", "replay_ok", "trace")
        return {k: rep[k] for k in keys}, not rep["replay_ok"]
    if args.derive == "axioms":
        return {"axioms": [{"name": a.name, "inequality": str(a)} for a in rs.axioms()],
                "coherent_identity_derivation": [s.result for s in rs.derive_coherent_identity().derivation]}, False
    raise ValidationError("resources needs --check or --derive")


def cmd_converse(args, seed):
    rng, = _streams(seed, 1)
    rep = fidelity_bound_audit(args.k_dim, args.q_dim, args.trials, rng,
                               maximally_entangled=args.maximally_entangled)
    return rep, bool(rep["violations"])


def cmd_ssa(args, seed):
    st_rng, = _streams(seed, 1)
    if args.state:
        psi = _load(args, st_rng)
        part = parse_partition(args.partition, psi)
        rep = ssa_operational_audit(psi, part, n=args.n, delta=args.delta)
        return rep, not rep["ssa_ok"]
    dims = parse_dims(args.dims or "2,2,2,2")
    if len(dims) != 4:
        raise ValidationError("--dims must list four systems (A, C, B, R)")
    labels = [SystemLabel(r, d) for r, (_, d) in zip("ACBR", dims)]
    part = Partition(("A",), ("C",), ("B",), ("R",))
    vals, dual = [], []
    for g in st_rng.spawn(args.trials):
        psi = random_pure_state(labels, g)
        i_b = cond_mutual_info(psi, ["C"], ["R"], ["B"])
        vals.append(i_b)
        dual.append(abs(cond_mutual_info(psi, ["C"], ["R"], ["A"]) - i_b))
    vals = np.array(vals)
    rep = {
        "trials": args.trials,
        "dims": [d for _, d in dims],
        "min_I(C;R|B)": float(vals.min()),
        "max_duality_gap": float(max(dual)),
        "violations": int(np.sum(vals < -1e-9)),
        "bound": "strong_subadditivity",
        "example": ssa_operational_audit(random_pure_state(labels, st_rng), part, n=args.n, delta=args.delta),
    }
    return rep, bool(rep["violations"])


COMMANDS = {
    "rates": cmd_rates,
    "decouple": cmd_decouple,
    "pgm": cmd_pgm,
    "protocol": cmd_protocol,
    "types": cmd_types,
    "assemble": cmd_assemble,
    "resources": cmd_resources,
    "converse": cmd_converse,
    "ssa": cmd_ssa,
}


# -- argument parser ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qredist", description="State-redistribution simulation and audits.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", help="64-bit seed (falls back to $QREDIST_SEED)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--threads", type=int, default=1, help="worker cap (runs are single-threaded)")

    st = argparse.ArgumentParser(add_help=False)
    st.add_argument("--state", help="state file or gen:{bell,ghz4,product,random}")
    st.add_argument("--dims", help="system dims, '2,2' or 'C=16,E=2'")
    st.add_argument("--factors", help="generator names for gen:product, comma separated")
    st.add_argument("--partition", help="roles, e.g. A=0,C=1,B=2,R=3 ('+' joins systems)")

    sub = p.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("rates", parents=[common, st], help="rate region and potentials")

    s = sub.add_parser("decouple", parents=[common, st], help="Monte-Carlo decoupling audit")
    s.add_argument("--c-name", default="C")
    s.add_argument("--s-dim", type=int, required=True)
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--perturbed", help="state file for the nearby state whose norms enter the bound")

    s = sub.add_parser("pgm", parents=[common], help="operator inequality and coherification audit")
    s.add_argument("--ensemble", help="JSON list of states (or {'states': [...]}) to discriminate")
    s.add_argument("--d-dim", type=int, default=8)
    s.add_argument("--kappa", type=int, default=4)
    s.add_argument("--trials", type=int, default=100)

    s = sub.add_parser("protocol", parents=[common, st], help="seeded one-shot protocol runs")
    s.add_argument("--bhat", type=int, required=True)
    s.add_argument("--kappa", type=int, default=1)
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--ghz", action="store_true", help="also evaluate the coherent-channel GHZ overlap")

    s = sub.add_parser("types", parents=[common, st], help="typical projector bounds")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--system", help="marginal to use, '+' joins systems")
    s.add_argument("--diag", help="diagonal density operator, e.g. 0.9,0.1")

    sub.add_parser("assemble", parents=[common, st], help="resource-calculus corner assembly")

    s = sub.add_parser("resources", parents=[common, st], help="parse, check and derive resource inequalities")
    s.add_argument("--check", help="inequality to validate")
    s.add_argument("--derive", choices=("corner", "axioms"))

    s = sub.add_parser("converse", parents=[common], help="entanglement-fidelity bound audit")
    s.add_argument("--k-dim", type=int, required=True)
    s.add_argument("--q-dim", type=int, required=True)
    s.add_argument("--trials", type=int, default=500)
    s.add_argument("--maximally-entangled", action="store_true")

    s = sub.add_parser("ssa", parents=[common, st], help="strong-subadditivity audit")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--delta", type=float, default=0.01)
    return p


def _needs_seed(args) -> bool:
    if args.subcommand in STOCHASTIC:
        return True
    return bool(getattr(args, "state", None) and str(args.state).startswith("gen:random"))


def run(argv=None) -> tuple[int, dict | None]:
    args = build_parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        seed = parse_seed(args.seed)
        if seed is None and _needs_seed(args):
            raise ValidationError(f"{args.subcommand} is stochastic: pass --seed or set QREDIST_SEED")
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        params = {k: v for k, v in sorted(vars(args).items())
                  if k not in ("subcommand", "state", "seed", "format", "out")}
        config = ExperimentConfig(args.subcommand, getattr(args, "state", None), params, seed, args.format, args.out)
        payload, violated = COMMANDS[args.subcommand](args, seed)
    except (ValidationError, StateError, rs.ResourceSyntaxError, ValueError) as e:
        print(f"qredist: error: {e}", file=sys.stderr)
        return EXIT_INVALID, None
    record = {
        "config": asdict(config),
        "version": _version(),
        "wall_clock": {"started": started, "elapsed_s": time.perf_counter() - t0},
        "payload": payload,
        "bound_violation": bool(violated),
    }
    record = _jsonable(record)
    text = render(record, args.format)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return (EXIT_VIOLATION if violated else EXIT_OK), record


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
