"""Resource-inequality calculus: terms, parsing, rewriting rules and derivations.

Rates are exact: either rationals or linear forms over named nonnegative
atoms (entropic quantities kept opaque).  Every rule application appends a
:class:`Step` that can be replayed on its own.

Grammar::

    ineq  := expr REL expr          REL in {'>=', '≥', '⪰'}
    expr  := term (('+' | '-') term)* | '0'
    term  := coef? '[' symbol ']' | 'o' '[' symbol ']' | coef? 'state:' NAME
    coef  := number ('/' number)? | '(' linear ')'
    symbol:= 'q->q' | 'qq' | 'c->c' | 'q->qq' | 'state:' NAME

``>=``/``≥`` mark finite inequalities and ``⪰`` asymptotic ones.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

KINDS = ("q->q", "qq", "c->c", "q->qq")
_ARROWS = {"→": "->"}


class ResourceSyntaxError(ValueError):
    def __init__(self, message: str, pos: int, text: str = ""):
        caret = f"\n  {text}\n  {' ' * pos}^" if text else ""
        super().__init__(f"{message} at position {pos}{caret}")
        self.pos = pos


class RuleError(ValueError):
    """A rewriting rule's precondition failed."""


# -- rates ------------------------------------------------------------------

def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    return Fraction(x)


def _fmt_frac(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


@dataclass(frozen=True)
class Rate:
    """``const + sum coeff * atom`` with every atom assumed nonnegative."""

    const: Fraction = Fraction(0)
    atoms: tuple[tuple[str, Fraction], ...] = ()

    @classmethod
    def of(cls, x) -> "Rate":
        if isinstance(x, Rate):
            return x
        return cls(_frac(x))

    @classmethod
    def atom(cls, name: str, coeff=1) -> "Rate":
        return cls(Fraction(0), ((name, _frac(coeff)),))

    @staticmethod
    def _norm(items: Iterable[tuple[str, Fraction]]) -> tuple[tuple[str, Fraction], ...]:
        acc: dict[str, Fraction] = {}
        for k, v in items:
            acc[k] = acc.get(k, Fraction(0)) + v
        return tuple(sorted((k, v) for k, v in acc.items() if v != 0))

    def __add__(self, other) -> "Rate":
        o = Rate.of(other)
        return Rate(self.const + o.const, self._norm(self.atoms + o.atoms))

    __radd__ = __add__

    def __neg__(self) -> "Rate":
        return Rate(-self.const, tuple((k, -v) for k, v in self.atoms))

    def __sub__(self, other) -> "Rate":
        return self + (-Rate.of(other))

    def __mul__(self, f) -> "Rate":
        f = _frac(f)
        return Rate(self.const * f, self._norm((k, v * f) for k, v in self.atoms))

    __rmul__ = __mul__

    def is_number(self) -> bool:
        return not self.atoms

    def sign(self) -> str | None:
        """One of ``pos``, ``zero``, ``neg``, ``nonneg``, ``nonpos`` or None (unknown)."""
        c = self.const
        if not self.atoms:
            return "pos" if c > 0 else "neg" if c < 0 else "zero"
        coeffs = [v for _, v in self.atoms]
        if all(v > 0 for v in coeffs):
            return "pos" if c > 0 else "nonneg" if c == 0 else None
        if all(v < 0 for v in coeffs):
            return "neg" if c < 0 else "nonpos" if c == 0 else None
        return None

    def value(self, env: Mapping[str, float] | None = None) -> float:
        env = env or {}
        return float(self.const) + sum(float(v) * env[k] for k, v in self.atoms)

    def __str__(self) -> str:
        if not self.atoms:
            return _fmt_frac(self.const)
        parts = []
        for k, v in self.atoms:
            parts.append((v, k))
        if self.const:
            parts.append((self.const, ""))
        out = ""
        for i, (v, k) in enumerate(parts):
            sgn = "-" if v < 0 else "+"
            mag = abs(v)
            body = (k if mag == 1 else f"{_fmt_frac(mag)} {k}") if k else _fmt_frac(mag)
            out += (("-" if sgn == "-" else "") + body) if i == 0 else f" {sgn} {body}"
        return f"({out})"


def snap(x: float, grid: float = 1e-9) -> Fraction:
    """Exact rational on a ``grid`` lattice (entropic rates measured in floats)."""
    step = Fraction(grid).limit_denominator(10**12)
    return Fraction(round(Fraction(x) / step)) * step


# -- symbols and expressions --------------------------------------------------

@dataclass(frozen=True, order=True)
class Symbol:
    order: int
    name: str

    @classmethod
    def parse(cls, s: str) -> "Symbol":
        for a, b in _ARROWS.items():
            s = s.replace(a, b)
        s = s.strip()
        if s in KINDS:
            return cls(KINDS.index(s), s)
        if s.startswith("state:") and len(s) > 6:
            return cls(len(KINDS), s)
        raise ValueError(f"unknown resource symbol {s!r}")

    @property
    def is_state(self) -> bool:
        return self.order == len(KINDS)


QQ = Symbol.parse("qq")
QCHAN = Symbol.parse("q->q")
CCHAN = Symbol.parse("c->c")
COBIT = Symbol.parse("q->qq")


def state(name: str) -> Symbol:
    return Symbol.parse(f"state:{name}")


@dataclass(frozen=True)
class ResourceExpr:
    terms: tuple[tuple[Symbol, Rate], ...] = ()
    sublinear: frozenset = frozenset()

    @classmethod
    def build(cls, terms: Mapping | Iterable = (), sublinear: Iterable[Symbol] = ()) -> "ResourceExpr":
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Symbol, Rate] = {}
        for sym, r in items:
            acc[sym] = acc.get(sym, Rate()) + Rate.of(r)
        acc = {k: v for k, v in acc.items() if v != Rate()}
        # o-terms are absorbed by any strictly positive rate of the same symbol
        sub = frozenset(s for s in sublinear if acc.get(s, Rate()).sign() != "pos")
        return cls(tuple(sorted(acc.items(), key=lambda kv: kv[0])), sub)

    def rate(self, sym: Symbol) -> Rate:
        return dict(self.terms).get(sym, Rate())

    def as_dict(self) -> dict[Symbol, Rate]:
        return dict(self.terms)

    def __add__(self, other: "ResourceExpr") -> "ResourceExpr":
        return ResourceExpr.build(list(self.terms) + list(other.terms), self.sublinear | other.sublinear)

    def scale(self, f) -> "ResourceExpr":
        return ResourceExpr.build([(s, r * f) for s, r in self.terms], self.sublinear)

    def without(self, sym: Symbol) -> "ResourceExpr":
        return ResourceExpr.build([(s, r) for s, r in self.terms if s != sym], self.sublinear - {sym})

    def __str__(self) -> str:
        parts = []
        syms = sorted(set(dict(self.terms)) | set(self.sublinear))
        for s in syms:
            if s in self.sublinear:
                parts.append(f"o[{s.name}]")
            if s in dict(self.terms):
                r = self.rate(s)
                if s.is_state and r == Rate.of(1):
                    parts.append(s.name)
                else:
                    parts.append(f"{r}[{s.name}]")
        return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class Step:
    rule: str
    premises: tuple[str, ...]
    result: str
    args: tuple = ()
    note: str = ""

    def replay(self) -> bool:
        """Re-derive ``result`` from the printed premises with the same rule."""
        if self.rule not in _RULES:
            return True
        prem = [parse_ri(p) for p in self.premises]
        try:
            out = _RULES[self.rule](*prem, *self.args)
        except RuleError:
            return False
        return out.canonical() == parse_ri(self.result).canonical()


@dataclass(frozen=True)
class Inequality:
    lhs: ResourceExpr
    rhs: ResourceExpr
    asymptotic: bool = True
    name: str = ""
    derivation: tuple[Step, ...] = field(default=(), compare=False)

    def canonical(self) -> tuple:
        return (self.lhs, self.rhs, self.asymptotic)

    def shape(self) -> tuple:
        return (self.lhs, self.rhs)

    def __str__(self) -> str:
        return f"{self.lhs} {'⪰' if self.asymptotic else '>='} {self.rhs}"

    def with_step(self, rule: str, premises: Iterable["Inequality"], args: tuple = (), note: str = "") -> "Inequality":
        prem = tuple(premises)
        history: tuple[Step, ...] = ()
        for p in prem:
            history += tuple(s for s in p.derivation if s not in history)
        step = Step(rule, tuple(str(p) for p in prem), str(self), args, note)
        return Inequality(self.lhs, self.rhs, self.asymptotic, self.name, history + (step,))

    def verify(self) -> bool:
        return all(s.replay() for s in self.derivation)


# -- parser -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<rel>>=|≥|⪰)
  | (?P<state>state:[A-Za-z0-9_|^{}.',;]+)
  | (?P<bracket>\[[^\]]*\])
  | (?P<num>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<atom>[A-Za-z][A-Za-z0-9_]*\([^()]*\)|[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[+\-*()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ResourceSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        t = self.toks[self.i]
        if (kind and t[0] != kind) or (value and t[1] != value):
            want = value or kind
            raise ResourceSyntaxError(f"expected {want!r}, found {t[1] or 'end of input'!r}", t[2], self.text)
        self.i += 1
        return t

    def number(self) -> Fraction:
        return Fraction(self.take("num")[1])

    def linear(self) -> Rate:
        total, sign = Rate(), 1
        while True:
            t = self.peek()
            if t[0] == "op" and t[1] in "+-":
                sign = -1 if t[1] == "-" else 1
                self.i += 1
                t = self.peek()
            if t[0] == "num":
                c = self.number()
                if self.peek()[1] == "*":
                    self.i += 1
                if self.peek()[0] == "atom":
                    total = total + Rate.atom(self.take("atom")[1], sign * c)
                else:
                    total = total + Rate.of(sign * c)
            elif t[0] == "atom":
                total = total + Rate.atom(self.take("atom")[1], sign)
            else:
                raise ResourceSyntaxError("expected a rate term", t[2], self.text)
            sign = 1
            nxt = self.peek()
            if not (nxt[0] == "op" and nxt[1] in "+-"):
                return total

    def coef(self) -> Rate | None:
        t = self.peek()
        if t[0] == "num":
            return Rate.of(self.number())
        if t[0] == "op" and t[1] == "(":
            self.i += 1
            r = self.linear()
            self.take("op", ")")
            return r
        return None

    def term(self, sign: int, terms: list, sub: list) -> None:
        t = self.peek()
        if t[0] == "atom" and t[1] == "o" and self.toks[self.i + 1][0] == "bracket":
            self.i += 1
            sub.append(self._symbol(self.take("bracket")))
            return
        if t[0] == "op" and t[1] == "-":
            # signed coefficient, as printed for negative rates
            self.i += 1
            sign = -sign
        c = self.coef()
        c = Rate.of(1) if c is None else c
        if self.peek()[1] == "*":
            self.i += 1
        t = self.peek()
        if t[0] == "bracket":
            terms.append((self._symbol(self.take("bracket")), c * sign))
        elif t[0] == "state":
            terms.append((Symbol.parse(self.take("state")[1]), c * sign))
        else:
            raise ResourceSyntaxError("expected a resource term", t[2], self.text)

    def _symbol(self, tok) -> Symbol:
        try:
            return Symbol.parse(tok[1][1:-1])
        except ValueError as e:
            raise ResourceSyntaxError(str(e), tok[2], self.text) from None

    def expr(self) -> ResourceExpr:
        t = self.peek()
        if t[0] == "num" and t[1] == "0" and self.toks[self.i + 1][0] in ("rel", "end"):
            self.i += 1
            return ResourceExpr()
        terms: list = []
        sub: list = []
        sign = 1
        if t[0] == "op" and t[1] == "-":
            sign = -1
            self.i += 1
        self.term(sign, terms, sub)
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1 if self.take()[1] == "-" else 1
            self.term(sign, terms, sub)
        return ResourceExpr.build(terms, sub)


def parse_expr(text: str) -> ResourceExpr:
    p = _Parser(text)
    e = p.expr()
    p.take("end")
    return e


def parse_ri(text: str, name: str = "") -> Inequality:
    """Parse ``lhs REL rhs`` into an :class:`Inequality` (not normalized)."""
    p = _Parser(text)
    lhs = p.expr()
    rel = p.take("rel")[1]
    rhs = p.expr()
    p.take("end")
    return Inequality(lhs, rhs, asymptotic=(rel == "⪰"), name=name)


# -- rules ------------------------------------------------------------------

def normalize(d: Inequality) -> Inequality:
    """Move negative rates to the other side, negated."""
    lhs, rhs = [], []
    for s, r in d.lhs.terms:
        (rhs if r.sign() in ("neg",) else lhs).append((s, r if r.sign() != "neg" else -r))
    for s, r in d.rhs.terms:
        (lhs if r.sign() in ("neg",) else rhs).append((s, r if r.sign() != "neg" else -r))
    out = Inequality(ResourceExpr.build(lhs, d.lhs.sublinear), ResourceExpr.build(rhs, d.rhs.sublinear), d.asymptotic, d.name)
    return out.with_step("normalize", [d]) if out.canonical() != d.canonical() else d


def to_asymptotic(d: Inequality) -> Inequality:
    """A finite inequality holds at every block length, hence asymptotically."""
    if d.asymptotic:
        return d
    return Inequality(d.lhs, d.rhs, True, d.name).with_step("to_asymptotic", [d])


def scale(d: Inequality, factor) -> Inequality:
    f = Rate.of(factor)
    if f.sign() not in ("pos", "nonneg", "zero"):
        raise RuleError(f"cannot scale by a rate of unknown or negative sign: {f}")
    if not d.asymptotic:
        raise RuleError("only asymptotic inequalities scale by rates")
    lhs = ResourceExpr.build([(s, _mul(r, f)) for s, r in d.lhs.terms], d.lhs.sublinear)
    rhs = ResourceExpr.build([(s, _mul(r, f)) for s, r in d.rhs.terms], d.rhs.sublinear)
    return Inequality(lhs, rhs, True, d.name).with_step("scale", [d], (str(f),))


def _mul(r: Rate, f: Rate) -> Rate:
    if f.is_number():
        return r * f.const
    if r.is_number():
        return f * r.const
    raise RuleError("products of two symbolic rates are not linear")


def add_both(d: Inequality, extra: ResourceExpr | str) -> Inequality:
    """``a >= b`` implies ``a + g >= b + g`` (run alongside an idle resource)."""
    extra = parse_expr(extra) if isinstance(extra, str) else extra
    return Inequality(d.lhs + extra, d.rhs + extra, d.asymptotic, d.name).with_step("add_both", [d], (str(extra),))


def compose(d1: Inequality, d2: Inequality) -> Inequality:
    """Composition: ``a >= b`` and ``b >= c`` give ``a >= c``."""
    if d1.rhs != d2.lhs:
        raise RuleError(f"middle expressions differ: {d1.rhs}  vs  {d2.lhs}")
    asym = d1.asymptotic or d2.asymptotic
    return Inequality(d1.lhs, d2.rhs, asym).with_step("compose", [d1, d2])


def cancel(d: Inequality, sym: Symbol | str, assume: str | None = None) -> Inequality:
    """Cancellation of a resource appearing on both sides.

    With ``R_in > R_out >= 0`` the net ``(R_in - R_out)`` stays on the left;
    otherwise a sublinear ``o`` term stays on the left and ``R_out - R_in``
    moves to the right.  ``assume`` ('gt' or 'le') resolves symbolic rates
    whose order cannot be decided from nonnegativity of the atoms.  A side
    that omits the symbol carries it at rate zero, so a symbol absent from
    both sides falls in the second branch and leaves only ``o[sym]``.
    """
    sym = Symbol.parse(sym) if isinstance(sym, str) else sym
    if not d.asymptotic:
        raise RuleError("cancellation needs an asymptotic inequality")
    r_in, r_out = d.lhs.rate(sym), d.rhs.rate(sym)
    for r in (r_in, r_out):
        if r.sign() not in ("pos", "zero", "nonneg"):
            raise RuleError(f"rate {r} of {sym.name} is not known to be nonnegative")
    diff_sign = (r_in - r_out).sign()
    if diff_sign == "pos":
        first = True
    elif diff_sign in ("zero", "neg", "nonpos"):
        first = False
    elif assume in ("gt", "le"):
        first = assume == "gt"
    else:
        raise RuleError(f"cannot decide {r_in} > {r_out}; pass assume='gt' or 'le'")
    beta = d.lhs.without(sym)
    gamma = d.rhs.without(sym)
    if first:
        lhs = beta + ResourceExpr.build([(sym, r_in - r_out)])
        rhs = gamma
    else:
        lhs = beta + ResourceExpr.build([], [sym])
        rhs = gamma + ResourceExpr.build([(sym, r_out - r_in)])
    args = (sym.name,) if assume is None or diff_sign in ("pos", "zero", "neg", "nonpos") else (sym.name, assume)
    return Inequality(lhs, rhs, True).with_step("cancel", [d], args, "first branch" if first else "second branch")


def remove_catalyst(d: Inequality, sym: Symbol | str) -> Inequality:
    """Drop ``o[a]`` on the left when ``a`` is produced at a positive rate on the right.

    The sublinear loan is repaid from the output of the first blocks.
    """
    sym = Symbol.parse(sym) if isinstance(sym, str) else sym
    if sym not in d.lhs.sublinear:
        raise RuleError(f"no o[{sym.name}] term on the left")
    if d.rhs.rate(sym).sign() != "pos":
        raise RuleError(f"{sym.name} is not generated at a positive rate")
    lhs = ResourceExpr.build(d.lhs.terms, d.lhs.sublinear - {sym})
    return Inequality(lhs, d.rhs, True).with_step("remove_catalyst", [d], (sym.name,))


def discard(d: Inequality, sym: Symbol | str) -> Inequality:
    """Throw away an output resource."""
    sym = Symbol.parse(sym) if isinstance(sym, str) else sym
    return Inequality(d.lhs, d.rhs.without(sym), d.asymptotic).with_step("discard", [d], (sym.name,))


_RULES: dict[str, Callable] = {
    "normalize": normalize,
    "to_asymptotic": to_asymptotic,
    "scale": lambda d, f: scale(d, parse_rate(f)),
    "add_both": add_both,
    "compose": compose,
    "cancel": cancel,
    "remove_catalyst": remove_catalyst,
    "discard": discard,
}


def parse_rate(text: str) -> Rate:
    p = _Parser(text)
    t = p.peek()
    if t[0] == "op" and t[1] == "(":
        r = p.coef()
    else:
        r = p.linear()
    p.take("end")
    return r


# -- axioms -----------------------------------------------------------------

_AXIOM_TEXT = [
    ("qubit sends cbit", "1[q->q] >= 1[c->c]"),
    ("qubit distributes ebit", "1[q->q] >= 1[qq]"),
    ("teleportation", "1[qq] + 2[c->c] >= 1[q->q]"),
    ("superdense coding", "1[qq] + 1[q->q] >= 2[c->c]"),
    ("coherent teleportation", "1[qq] + 2[q->qq] >= 2[qq] + 1[q->q]"),
    ("coherent channel identity", "2[q->qq] ⪰ 1[q->q] + 1[qq]"),
]


def axioms() -> list[Inequality]:
    out = []
    for name, text in _AXIOM_TEXT:
        d = parse_ri(text, name)
        out.append(Inequality(d.lhs, d.rhs, d.asymptotic, name, (Step("axiom", (), str(d), (), name),)))
    return out


def axiom(name: str) -> Inequality:
    for a in axioms():
        if a.name == name:
            return a
    raise KeyError(name)


def is_axiom(d: Inequality) -> str | None:
    for a in axioms():
        if a.shape() == d.shape():
            return a.name
    return None


def derive_coherent_identity() -> Inequality:
    """Asymptotic coherent-channel identity from its finite single-shot version."""
    d = to_asymptotic(axiom("coherent teleportation"))
    d = cancel(d, QQ)
    return remove_catalyst(d, QQ)


# -- redistribution assembly --------------------------------------------------

PSI_BEFORE = state("psi^{AC|B}")
PSI_AFTER = state("psi^{A|CB}")


@dataclass
class CornerDerivation:
    final: Inequality
    piggyback_inequality: Inequality
    net_cost: Inequality
    q_star: Rate
    e_star: Rate
    sublinear: tuple[str, ...]
    branches: dict

    def trace(self) -> list[dict]:
        return [
            {"rule": s.rule, "premises": list(s.premises), "result": s.result, "args": list(s.args), "note": s.note}
            for s in self.final.derivation
        ]


def piggyback_inequality(i_c_rb, i_c_a, i_c_b) -> Inequality:
    """``psi^{AC|B} + I(C;RB)/2 [q->q] + I(C;A)/2 [qq] ⪰ psi^{A|CB} + I(C;B) [q->qq]``."""
    half = Fraction(1, 2)
    lhs = ResourceExpr.build([(PSI_BEFORE, 1), (QCHAN, Rate.of(i_c_rb) * half), (QQ, Rate.of(i_c_a) * half)])
    rhs = ResourceExpr.build([(PSI_AFTER, 1), (COBIT, Rate.of(i_c_b))])
    d = Inequality(lhs, rhs, True, "piggyback redistribution")
    note = "one-shot protocol with typical projections at Q > I(C;RB)/2, E > I(C;A)/2, R < I(C;B)"
    return Inequality(d.lhs, d.rhs, True, d.name, (Step("premise", (), str(d), (), note),))


def corner_derivation(i_c_rb, i_c_a, i_c_b, assume_q: str | None = None, assume_e: str | None = None) -> CornerDerivation:
    """Replay the assembly of the optimal cost pair from the piggyback protocol."""
    pig = piggyback_inequality(i_c_rb, i_c_a, i_c_b)
    cobit = derive_coherent_identity()
    cobit = scale(cobit, Rate.of(i_c_b) * Fraction(1, 2))
    cobit = add_both(cobit, ResourceExpr.build([(PSI_AFTER, 1)]))
    net = compose(pig, cobit)
    d = cancel(net, QCHAN, assume_q)
    q_branch = d.derivation[-1].note
    d = cancel(d, QQ, assume_e)
    e_branch = d.derivation[-1].note
    q_star = d.lhs.rate(QCHAN) - d.rhs.rate(QCHAN)
    e_star = d.lhs.rate(QQ) - d.rhs.rate(QQ)
    return CornerDerivation(
        final=d,
        piggyback_inequality=pig,
        net_cost=net,
        q_star=q_star,
        e_star=e_star,
        sublinear=tuple(sorted(s.name for s in d.lhs.sublinear)),
        branches={"q->q": q_branch, "qq": e_branch},
    )
