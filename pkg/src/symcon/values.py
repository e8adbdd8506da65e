"""Runtime values, the relational delta on concrete and symbolic values, and
the three-valued proof system relating values, contracts, and predicates.

A value is a pre-value paired with a set of contracts it is known to satisfy
(its refinement set).  Opaque values carry all their information in that set;
concrete values mostly ignore it.  Refinement sets are kept alpha-normalized
so that set membership is alpha-insensitive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

from .lang import (
    LANG, OPS, PREDICATES, AndC, Bool, ConsC, Contract, DepFun, Empty, Expr, node,
    Label, Lam, Num, Opq, OrC, Pred, RecC, ValE, _alpha_c, _alpha_e, _next,
    alpha_contract, base_pred_of, free_vars, pp_contract, pp_expr,
    pred_contract, skey, sort_by_key, unroll_recc,
)

# ---------------------------------------------------------------------------
# Pre-values and values
# ---------------------------------------------------------------------------

@node
class NumV:
    n: int


@node
class BoolV:
    b: bool


@node
class EmptyV:
    pass


@node
class OpqV:
    pass


@node
class PairV:
    car: "Value"
    cdr: "Value"


@node
class CloV:
    """A function value.  env is None in the substitution-based term model
    and an environment in the machine.  home marks closures obtained from a
    module's self-reference (used by recursive-call widening)."""

    var: str
    body: Expr
    env: object = None
    home: Optional[str] = None


@node
class BlessV:
    """A function wrapped by a function-contract monitor.  Applying it checks
    the domain, calls the wrapped function, and checks the (dependent) range.
    inner is a Value in the term model and a store address in the machine;
    cenv closes over free variables of dom/rng in the machine."""

    dom: Contract
    var: str
    rng: Contract
    pos: Label
    neg: Label
    cno: Label
    inner: object
    cenv: object = None


PreValue = Union[NumV, BoolV, EmptyV, OpqV, PairV, CloV, BlessV]


@node
class Value:
    pre: PreValue
    refinements: frozenset = frozenset()

    def pp(self) -> str:
        return pp_value(self)

    def alpha(self, env, counter) -> "Value":
        return alpha_value(self, env, counter)


@node
class Blame:
    blamed: Label
    on: Label
    witness: Optional[Value] = None
    contract: Optional[Contract] = None

    def pp(self) -> str:
        parts = [f"(blame {self.blamed.render()} {self.on.render()}"]
        if self.contract is not None:
            parts.append(pp_contract(self.contract))
        if self.witness is not None:
            parts.append(self.witness.pp())
        return " ".join(parts) + ")"

    def alpha(self, env, counter) -> "Blame":
        w = self.witness.alpha(env, counter) if self.witness else None
        c = (alpha_contract(self.contract, env, counter)
             if self.contract is not None else None)
        return Blame(self.blamed, self.on, w, c)


@node
class Val:
    value: Value


@node
class Err:
    blame: Blame


Answer = Union[Val, Err]


class Verdict(enum.Enum):
    PROVES = "proves"
    REFUTES = "refutes"
    AMBIGUOUS = "ambiguous"


PROVES = Verdict.PROVES
REFUTES = Verdict.REFUTES
AMBIGUOUS = Verdict.AMBIGUOUS


def mk(pre: PreValue, *contracts: Contract) -> Value:
    v = Value(pre)
    for c in contracts:
        v = refine(v, c)
    return v


OPAQUE = Value(OpqV())


def num(n: int) -> Value:
    return Value(NumV(n))


def boolean(b: bool) -> Value:
    return Value(BoolV(b))


TRUE = boolean(True)
FALSE = boolean(False)
EMPTY = Value(EmptyV())


def refine(v: Value, c: Contract) -> Value:
    """v with c added to its refinement set (alpha-deduplicated)."""
    return Value(v.pre, v.refinements | {alpha_contract(c)})


def is_abstract(v: Value) -> bool:
    return isinstance(v.pre, OpqV)


def pp_value(v: Value) -> str:
    pre = v.pre
    if isinstance(pre, NumV):
        base = str(pre.n)
    elif isinstance(pre, BoolV):
        base = "true" if pre.b else "false"
    elif isinstance(pre, EmptyV):
        base = "empty"
    elif isinstance(pre, PairV):
        base = f"(cons {pp_value(pre.car)} {pp_value(pre.cdr)})"
    elif isinstance(pre, CloV):
        base = pp_expr(Lam(pre.var, pre.body))
    elif isinstance(pre, BlessV):
        arrow = pp_contract(DepFun(pre.dom, pre.var, pre.rng))
        base = f"(blessed {arrow})"
    else:
        refs = sort_by_key(v.refinements)
        if not refs:
            return "•"
        return "(• " + " ".join(pp_contract(c) for c in refs) + ")"
    return base


def pp_answer(a: Answer) -> str:
    return a.value.pp() if isinstance(a, Val) else a.blame.pp()


def alpha_value(v: Value, env=None, counter=None) -> Value:
    env = env or {}
    counter = counter if counter is not None else [0]
    pre = v.pre
    if isinstance(pre, PairV):
        npre: PreValue = PairV(alpha_value(pre.car, env, counter),
                               alpha_value(pre.cdr, env, counter))
    elif isinstance(pre, CloV):
        nv = _next(counter, "v")
        npre = CloV(nv, _alpha_e(pre.body, {**env, pre.var: nv}, counter),
                    pre.env, pre.home)
    elif isinstance(pre, BlessV):
        dom = _alpha_c(pre.dom, env, counter)
        nv = _next(counter, "v")
        rng = _alpha_c(pre.rng, {**env, pre.var: nv}, counter)
        inner = (alpha_value(pre.inner, env, counter)
                 if isinstance(pre.inner, Value) else pre.inner)
        npre = BlessV(dom, nv, rng, pre.pos, pre.neg, pre.cno, inner, pre.cenv)
    else:
        npre = pre
    refs = frozenset(alpha_contract(c, env, [0]) for c in v.refinements)
    return Value(npre, refs)


# ---------------------------------------------------------------------------
# Value forms embedded in expressions
# ---------------------------------------------------------------------------

def val_expr(v: Value) -> Expr:
    """Canonical expression form of a value: unrefined literals and closed
    lambdas render as their source forms, everything else embeds as ValE.
    Substitution, reduction, and machine unloading all use this one embedding
    so that structurally equal programs stay structurally equal."""
    if not v.refinements:
        pre = v.pre
        if isinstance(pre, NumV):
            return Num(pre.n)
        if isinstance(pre, BoolV):
            return Bool(pre.b)
        if isinstance(pre, EmptyV):
            return Empty()
        if isinstance(pre, OpqV):
            return Opq()
        if isinstance(pre, CloV) and pre.env is None and pre.home is None:
            return Lam(pre.var, pre.body)
    return ValE(v)


def value_of_expr(e: Expr, env=None) -> Optional[Value]:
    """The value denoted by a value-form expression, or None."""
    if env is None:
        try:
            return e._v0
        except AttributeError:
            pass
        v = _value_of(e, None)
        object.__setattr__(e, "_v0", v)
        return v
    return _value_of(e, env)


def _value_of(e: Expr, env) -> Optional[Value]:
    if isinstance(e, ValE):
        return e.value
    if isinstance(e, Num):
        return Value(NumV(e.n))
    if isinstance(e, Bool):
        return Value(BoolV(e.b))
    if isinstance(e, Empty):
        return EMPTY
    if isinstance(e, Opq):
        return OPAQUE
    if isinstance(e, Lam):
        if env is None:
            return Value(CloV(e.var, e.body, None))
        fv = free_vars(e)
        trimmed = tuple(sorted((x, a) for x, a in env if x in fv))
        return Value(CloV(e.var, e.body, trimmed))
    return None


# ---------------------------------------------------------------------------
# Concrete delta on predicates
# ---------------------------------------------------------------------------

def concrete_pred(op: str, v: Value) -> Optional[bool]:
    """The concrete predicate table; None when v is abstract."""
    pre = v.pre
    if isinstance(pre, OpqV):
        return None
    if op == "nat?":
        return isinstance(pre, NumV)
    if op == "bool?":
        return isinstance(pre, BoolV)
    if op == "empty?":
        return isinstance(pre, EmptyV)
    if op == "cons?":
        return isinstance(pre, PairV)
    if op == "proc?":
        return isinstance(pre, (CloV, BlessV))
    if op == "false?":
        return isinstance(pre, BoolV) and pre.b is False
    raise ValueError(f"not a predicate: {op}")


# ---------------------------------------------------------------------------
# Contract / predicate proof rules
# ---------------------------------------------------------------------------

def contract_proves_pred(c: Contract, op: str, _seen=()) -> bool:
    base = base_pred_of(c)
    if base is not None:
        if base == op:
            return True
        if base == "false?" and op == "bool?":
            return True
        return False
    if isinstance(c, ConsC):
        return op == "cons?"
    if isinstance(c, DepFun):
        return op == "proc?"
    if isinstance(c, OrC):
        return (contract_proves_pred(c.left, op, _seen)
                and contract_proves_pred(c.right, op, _seen))
    if isinstance(c, AndC):
        return (contract_proves_pred(c.left, op, _seen)
                or contract_proves_pred(c.right, op, _seen))
    return False


def contract_refutes_pred(c: Contract, op: str, _seen=()) -> bool:
    base = base_pred_of(c)
    if base is not None:
        return base != op and {base, op} != {"false?", "bool?"}
    if isinstance(c, DepFun):
        return op != "proc?"
    if isinstance(c, ConsC):
        return op != "cons?"
    if isinstance(c, OrC):
        return (contract_refutes_pred(c.left, op, _seen)
                and contract_refutes_pred(c.right, op, _seen))
    if isinstance(c, AndC):
        return (contract_refutes_pred(c.left, op, _seen)
                or contract_refutes_pred(c.right, op, _seen))
    if isinstance(c, RecC):
        key = skey(alpha_contract(c))
        if key in _seen:
            return False
        return contract_refutes_pred(unroll_recc(c), op, _seen + (key,))
    return False


def prove_pred(v: Value, op: str) -> Verdict:
    """Does v provably satisfy, provably violate, or neither, the base
    predicate op?"""
    concrete = concrete_pred(op, v)
    if concrete is True:
        return PROVES
    if concrete is False:
        return REFUTES
    for c in v.refinements:
        if contract_proves_pred(c, op):
            return PROVES
    for c in v.refinements:
        if contract_refutes_pred(c, op):
            return REFUTES
    return AMBIGUOUS


# ---------------------------------------------------------------------------
# Value / contract proof rules
# ---------------------------------------------------------------------------

def proves_contract(v: Value, c: Contract, _seen=()) -> bool:
    if alpha_contract(c) in v.refinements:
        return True
    base = base_pred_of(c)
    if base is not None:
        return prove_pred(v, base) == PROVES
    if isinstance(c, AndC):
        return (proves_contract(v, c.left, _seen)
                and proves_contract(v, c.right, _seen))
    if isinstance(c, OrC):
        return (proves_contract(v, c.left, _seen)
                or proves_contract(v, c.right, _seen))
    if isinstance(c, ConsC) and isinstance(v.pre, PairV):
        return (proves_contract(v.pre.car, c.car, _seen)
                and proves_contract(v.pre.cdr, c.cdr, _seen))
    if isinstance(c, RecC):
        key = skey(alpha_contract(c))
        if key in _seen:
            return False
        return proves_contract(v, unroll_recc(c), _seen + (key,))
    return False


def refutes_contract(v: Value, c: Contract, _seen=()) -> bool:
    base = base_pred_of(c)
    if base is not None:
        return prove_pred(v, base) == REFUTES
    if isinstance(c, OrC):
        return (refutes_contract(v, c.left, _seen)
                and refutes_contract(v, c.right, _seen))
    if isinstance(c, AndC):
        return (refutes_contract(v, c.left, _seen)
                or refutes_contract(v, c.right, _seen))
    if isinstance(c, DepFun):
        return prove_pred(v, "proc?") == REFUTES
    if isinstance(c, ConsC):
        if prove_pred(v, "cons?") == REFUTES:
            return True
        if isinstance(v.pre, PairV):
            return (refutes_contract(v.pre.car, c.car, _seen)
                    or refutes_contract(v.pre.cdr, c.cdr, _seen))
        if isinstance(v.pre, OpqV):
            return (refutes_contract(project(v, "left"), c.car, _seen)
                    or refutes_contract(project(v, "right"), c.cdr, _seen))
        return False
    if isinstance(c, RecC):
        key = skey(alpha_contract(c))
        if key in _seen:
            return False
        return refutes_contract(v, unroll_recc(c), _seen + (key,))
    return False


def prove_contract(v: Value, c: Contract) -> Verdict:
    if proves_contract(v, c):
        return PROVES
    if refutes_contract(v, c):
        return REFUTES
    return AMBIGUOUS


# ---------------------------------------------------------------------------
# Projections and splitting
# ---------------------------------------------------------------------------

def project(v: Value, side: str) -> Value:
    """Component of a (possibly abstract) pair.  For an opaque value, an
    opaque value refined by the matching components of its pair refinements."""
    if isinstance(v.pre, PairV):
        return v.pre.car if side == "left" else v.pre.cdr
    out = OPAQUE
    for c in sort_by_key(v.refinements):
        if isinstance(c, ConsC):
            out = refine(out, c.car if side == "left" else c.cdr)
    return out


def splittable(v: Value) -> bool:
    return isinstance(v.pre, OpqV) and any(
        isinstance(c, (OrC, RecC)) for c in v.refinements)


def split_abstract(v: Value):
    """One-step splits of an opaque value: each or/c refinement is replaced
    by one disjunct; each rec/c refinement is unrolled once."""
    out = []
    if not isinstance(v.pre, OpqV):
        return [v]
    for c in sort_by_key(v.refinements):
        rest = v.refinements - {c}
        if isinstance(c, OrC):
            out.append(Value(v.pre, rest | {alpha_contract(c.left)}))
            out.append(Value(v.pre, rest | {alpha_contract(c.right)}))
        elif isinstance(c, RecC):
            out.append(Value(v.pre, rest | {alpha_contract(unroll_recc(c))}))
    return out if out else [v]


# ---------------------------------------------------------------------------
# The delta relation
# ---------------------------------------------------------------------------

# Test hooks: named mutations that deliberately break delta rows, used by the
# soundness harness to demonstrate that the fuzzer catches unsound changes.
MUTATIONS: set = set()


def _blame(op: str, site: Label, v: Value) -> Err:
    return Err(Blame(site if site else LANG, LANG, v, pred_contract_for(op)))


def pred_contract_for(op: str) -> Contract:
    guard = {"succ": "nat?", "+": "nat?", "=": "nat?",
             "car": "cons?", "cdr": "cons?"}.get(op, op)
    return pred_contract(guard if guard in PREDICATES else "proc?")


def delta(op: str, args: tuple, site: Label):
    """All answers of the primitive op on args: a set of Val/Err."""
    if op not in OPS or len(args) != OPS[op]:
        return [Err(Blame(site if site else LANG, LANG,
                          args[0] if args else None, None))]
    if op in PREDICATES:
        v = args[0]
        verdict = prove_pred(v, op)
        if verdict == PROVES:
            return [Val(TRUE)]
        if verdict == REFUTES:
            return [Val(FALSE)]
        return [Val(TRUE), Val(FALSE)]
    if op == "cons":
        return [Val(Value(PairV(args[0], args[1])))]
    if op == "succ":
        v = args[0]
        if isinstance(v.pre, NumV):
            return [Val(num(v.pre.n + 1))]
        verdict = prove_pred(v, "nat?")
        out = []
        if verdict != REFUTES:
            out.append(Val(mk(OpqV(), pred_contract("nat?"))))
        if verdict != PROVES:
            out.append(_blame(op, site, v))
        return out
    if op in ("+", "="):
        a, b = args
        if isinstance(a.pre, NumV) and isinstance(b.pre, NumV):
            if op == "+":
                return [Val(num(a.pre.n + b.pre.n))]
            return [Val(boolean(a.pre.n == b.pre.n))]
        va, vb = prove_pred(a, "nat?"), prove_pred(b, "nat?")
        out = []
        if va != REFUTES and vb != REFUTES:
            if op == "+":
                out.append(Val(mk(OpqV(), pred_contract("nat?"))))
            else:
                out.extend([Val(TRUE), Val(FALSE)])
        if va != PROVES:
            out.append(_blame(op, site, a))
        if vb != PROVES:
            out.append(_blame(op, site, b))
        return out
    if op in ("car", "cdr"):
        v = args[0]
        side = "left" if op == "car" else "right"
        verdict = prove_pred(v, "cons?")
        out = []
        if verdict != REFUTES:
            out.append(Val(project(v, side)))
        if verdict != PROVES:
            if op == "car" and "drop-abstract-car-blame" in MUTATIONS \
                    and isinstance(v.pre, OpqV):
                pass
            else:
                out.append(_blame(op, site, v))
        return out
    raise AssertionError(op)
