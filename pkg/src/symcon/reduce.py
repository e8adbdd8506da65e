"""Small-step nondeterministic reduction over whole terms.

This is the executable reference semantics: beta and rec unrolling, the
relational delta, module references that insert monitors at boundaries, flat
and higher-order contract checking, abstract application backed by the
demonic havoc context, and precision-improving splits of opaque values.

Evaluation of a program runs the main expression after a nondeterministically
chosen demonic exercise of one of the concrete modules, so that blame which
only an adversarial client could trigger is still discovered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .lang import (
    DEMONIC, LANG, TOP, AndC, App, BlameE, Bool, ConsC, Contract, CVar,
    DepFun, Empty, Expr, If, Label, Lam, ModRef, Mon, Num, Opq, OrC, Pred,
    PrimApp, Program, Rec, RecC, ValE, Var, alpha_contract, alpha_expr,
    fresh_var, is_flat, pp_contract, pp_expr, skey, subst, subst_contract,
    unroll_recc,
)
from .values import (
    AMBIGUOUS, PROVES, REFUTES, Answer, Blame, BlessV, CloV, Err, OpqV, Val,
    Value, alpha_value, delta, is_abstract, mk, prove_contract, prove_pred,
    pred_contract, refine, split_abstract, splittable, val_expr,
    value_of_expr,
)

INDY = [False]   # dependent-contract discipline; lax by default


class Stuck(Exception):
    """No rule applies to a non-answer: an interpreter bug, not program error."""


class NotFlat(Exception):
    pass


# ---------------------------------------------------------------------------
# Module context
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModCtx:
    mods: tuple    # ((name, contract, body Value), ...)

    def lookup(self, name: str):
        for n, c, v in self.mods:
            if n == name:
                return c, v
        return None

    def names(self):
        return [n for n, _, _ in self.mods]

    def concrete_names(self):
        return [n for n, _, v in self.mods if not is_abstract(v)]

    def is_opaque(self, name: str) -> bool:
        entry = self.lookup(name)
        return entry is not None and is_abstract(entry[1])


def module_context(p: Program) -> ModCtx:
    mods = []
    for m in p.modules:
        v = body_value(m.body)
        if v is None:
            raise ValueError(f"module {m.name} body is not a value")
        mods.append((m.name, m.contract, v))
    return ModCtx(tuple(mods))


def body_value(e: Expr) -> Optional[Value]:
    """Module bodies are syntactic values; cons literals build pairs."""
    from .values import PairV
    if isinstance(e, PrimApp) and e.op == "cons":
        a = body_value(e.args[0])
        b = body_value(e.args[1])
        if a is None or b is None:
            return None
        return Value(PairV(a, b))
    return value_of_expr(e, None)


# ---------------------------------------------------------------------------
# Flat contract compilation
# ---------------------------------------------------------------------------

_fc_cache: dict = {}


def fc_compile(c: Contract, site: Optional[Label] = None) -> Expr:
    """Compile a flat contract to the source of a one-argument predicate.
    All operation sites in the generated code, including those inside
    predicate code, carry the given label: the party whose value is under
    test answers for any misbehavior of the check itself.  Memoized so the
    same check compiles to identical code (stable fresh names)."""
    hit = _fc_cache.get((c, site))
    if hit is not None:
        return hit
    if not is_flat(c):
        raise NotFlat(pp_contract(c))
    code = _fc(c, site)
    if site is not None:
        from .lang import _label_expr
        code = _label_expr(code, site)
    _fc_cache[(c, site)] = code
    return code


def _fc(c: Contract, site) -> Expr:
    if isinstance(c, Pred):
        return c.expr
    if isinstance(c, CVar):
        return Var("%rc:" + c.name)
    if isinstance(c, RecC):
        return Rec("%rc:" + c.var, _fc(c.body, site))
    x = fresh_var("fc")
    if isinstance(c, AndC):
        return Lam(x, _and(_apply(_fc(c.left, site), Var(x), site),
                           _apply(_fc(c.right, site), Var(x), site)))
    if isinstance(c, OrC):
        return Lam(x, _or(_apply(_fc(c.left, site), Var(x), site),
                          _apply(_fc(c.right, site), Var(x), site)))
    if isinstance(c, ConsC):
        return Lam(x, _and(
            PrimApp("cons?", (Var(x),), site),
            _and(_apply(_fc(c.car, site), PrimApp("car", (Var(x),), site), site),
                 _apply(_fc(c.cdr, site), PrimApp("cdr", (Var(x),), site), site))))
    raise NotFlat(str(c))


def _apply(fn: Expr, arg: Expr, site) -> Expr:
    return App(fn, arg, site)


def _and(a: Expr, b: Expr) -> Expr:
    return If(a, b, Bool(False))


def _or(a: Expr, b: Expr) -> Expr:
    return If(a, Bool(True), b)


# ---------------------------------------------------------------------------
# Module references and the demonic prelude
# ---------------------------------------------------------------------------

class UnboundModule(Exception):
    pass


def resolve_module_ref(m: ModCtx, name: str, frm: Label) -> Expr:
    entry = m.lookup(name)
    if entry is None:
        raise UnboundModule(name)
    c, v = entry
    me = Label.module(name)
    if frm == me:
        return val_expr(v)
    if is_abstract(v):
        return Mon(c, me, frm, me, val_expr(refine(v, c)))
    return Mon(c, me, frm, me, val_expr(v))


def amb(es: list) -> Expr:
    """Nondeterministic choice: a chain of branches on an opaque test."""
    if len(es) == 1:
        return es[0]
    return If(Opq(), es[0], amb(es[1:]))


def havoc_expr() -> Expr:
    """rec y. lam x. amb{ y (x .), y (car x), y (cdr x) }, demonically labeled."""
    y, x = "%hvy", "%hvx"
    return Rec(y, Lam(x, amb([
        App(Var(y), App(Var(x), Opq(), DEMONIC), DEMONIC),
        App(Var(y), PrimApp("car", (Var(x),), DEMONIC), DEMONIC),
        App(Var(y), PrimApp("cdr", (Var(x),), DEMONIC), DEMONIC),
    ])))


HAVOC = havoc_expr()


def make_demonic_prelude(m: ModCtx) -> Expr:
    branches = [Bool(True)]
    for f in m.concrete_names():
        branches.append(App(HAVOC, ModRef(f, DEMONIC), DEMONIC))
    return amb(branches)


def begin_program(m: ModCtx, main: Expr) -> Expr:
    """begin e0 main, encoded as ((lam ignored. main) e0)."""
    return App(Lam("%begin", main), make_demonic_prelude(m), TOP)


# ---------------------------------------------------------------------------
# Decomposition: the unique redex of a closed non-answer expression
# ---------------------------------------------------------------------------

def is_final_value(e: Expr) -> bool:
    try:
        return e._final
    except AttributeError:
        pass
    if isinstance(e, (Num, Bool, Empty, Opq, Lam)):
        r = True
    elif isinstance(e, ValE):
        r = not splittable(e.value)
    else:
        r = False
    object.__setattr__(e, "_final", r)
    return r


def is_answer(e: Expr) -> bool:
    return is_final_value(e) or isinstance(e, BlameE)


def find_redex(e: Expr):
    """Return (redex, rebuild) for the leftmost-innermost live position, or
    None when e is an answer.  A splittable opaque value is itself live."""
    if is_answer(e):
        return None
    return _decompose(e, lambda x: x)


def _decompose(e: Expr, ctx):
    v = value_of_expr(e)
    if v is not None:
        if splittable(v):
            return e, ctx
        return None
    if isinstance(e, BlameE):
        return e, ctx
    if isinstance(e, App):
        sub = _live(e.fn, lambda x: ctx(App(x, e.arg, e.site)))
        if sub:
            return sub
        sub = _live(e.arg, lambda x: ctx(App(e.fn, x, e.site)))
        if sub:
            return sub
        return e, ctx
    if isinstance(e, If):
        sub = _live(e.test, lambda x: ctx(If(x, e.then, e.els)))
        if sub:
            return sub
        return e, ctx
    if isinstance(e, PrimApp):
        for i, a in enumerate(e.args):
            def rebuild(x, i=i):
                args = e.args[:i] + (x,) + e.args[i + 1:]
                return ctx(PrimApp(e.op, args, e.site))
            sub = _live(a, rebuild)
            if sub:
                return sub
        return e, ctx
    if isinstance(e, Mon):
        sub = _live(e.body, lambda x: ctx(Mon(e.con, e.pos, e.neg, e.cno, x)))
        if sub:
            return sub
        return e, ctx
    if isinstance(e, (ModRef, Rec)):
        return e, ctx
    raise Stuck(f"cannot decompose {pp_expr(e)}")


def _live(e: Expr, ctx):
    """Descend into e unless it is a final (non-splittable) value."""
    if is_final_value(e):
        return None
    return _decompose(e, ctx)


# ---------------------------------------------------------------------------
# Contraction: all one-step results of a redex
# ---------------------------------------------------------------------------

def contract_redex(m: ModCtx, e: Expr):
    """Return [(rule, expr, aborts)]: the applicable rule instances.
    aborts means the surrounding context is discarded (blame)."""
    v = value_of_expr(e)
    if v is not None and splittable(v):
        out = []
        for w in split_abstract(v):
            rule = "split-or" if any(isinstance(c, OrC) for c in v.refinements
                                     - w.refinements) else "split-rec"
            out.append((rule, val_expr(w), False))
        return out
    if isinstance(e, BlameE):
        return [("blame-abort", e, True)]
    if isinstance(e, Rec):
        return [("rec-unroll", subst(e.body, e.var, e), False)]
    if isinstance(e, ModRef):
        rule = "module-self" if e.frm == Label.module(e.name) else "module-ref"
        return [(rule, resolve_module_ref(m, e.name, e.frm), False)]
    if isinstance(e, App):
        return _contract_app(e)
    if isinstance(e, PrimApp):
        args = tuple(value_of_expr(a) for a in e.args)
        out = []
        for ans in delta(e.op, args, e.site):
            if isinstance(ans, Val):
                out.append((f"delta-{e.op}", val_expr(ans.value), False))
            else:
                out.append((f"delta-{e.op}-blame", BlameE(ans.blame), False))
        return out
    if isinstance(e, If):
        t = value_of_expr(e.test)
        out = []
        for ans in delta("false?", (t,), None):
            assert isinstance(ans, Val)
            if ans.value.pre.b:
                out.append(("if-false", e.els, False))
            else:
                out.append(("if-true", e.then, False))
        return out
    if isinstance(e, Mon):
        return _contract_mon(e)
    raise Stuck(f"no rule for {pp_expr(e)}")


def _contract_app(e: App):
    f = value_of_expr(e.fn)
    w = value_of_expr(e.arg)
    out = []
    verdict = prove_pred(f, "proc?")
    if verdict != REFUTES:
        pre = f.pre
        if isinstance(pre, CloV):
            out.append(("beta", subst(pre.body, pre.var, val_expr(w)), False))
        elif isinstance(pre, BlessV):
            out.append(("blessed-beta", blessed_app(pre, w, e.site), False))
        elif isinstance(pre, OpqV):
            ranges = frozenset(
                alpha_contract(subst_contract(c.rng, c.var, val_expr(w)))
                for c in f.refinements if isinstance(c, DepFun))
            out.append(("apply-abstract", val_expr(Value(OpqV(), ranges)),
                        False))
            out.append(("apply-havoc", App(HAVOC, val_expr(w), DEMONIC),
                        False))
    if verdict != PROVES:
        bl = Blame(e.site, LANG, f, pred_contract("proc?"))
        out.append(("apply-non-proc", BlameE(bl), False))
    return out


def blessed_app(b: BlessV, w: Value, site: Label) -> Expr:
    """The eta-expansion of a function-contract monitor, applied: check the
    domain with reversed labels, call the wrapped function, check the range
    with the argument substituted in (lax by default, indy optionally)."""
    dom_mon = Mon(b.dom, b.neg, b.pos, b.cno, val_expr(w))
    if INDY[0]:
        arg_for_rng: Expr = Mon(b.dom, b.pos, b.cno, b.cno, val_expr(w))
    else:
        arg_for_rng = val_expr(w)
    rng = subst_contract(b.rng, b.var, arg_for_rng)
    inner = b.inner if isinstance(b.inner, Value) else None
    assert inner is not None, "term-model blessed values hold inline functions"
    return Mon(rng, b.pos, b.neg, b.cno, App(val_expr(inner), dom_mon, site))


def _contract_mon(e: Mon):
    c = e.con
    v = value_of_expr(e.body)
    labels = (e.pos, e.neg, e.cno)
    out = []
    if is_flat(c):
        verdict = prove_contract(v, c)
        if verdict == PROVES:
            out.append(("check-proved", val_expr(refine(v, c)), False))
        elif verdict == REFUTES:
            out.append(("check-refuted",
                        BlameE(Blame(e.pos, e.cno, v, c)), False))
        else:
            test = App(fc_compile(c, e.pos), val_expr(v), e.pos)
            out.append(("check-test",
                        If(test, val_expr(refine(v, c)),
                           BlameE(Blame(e.pos, e.cno, v, c))), False))
        return out
    if isinstance(c, DepFun):
        verdict = prove_pred(v, "proc?")
        if verdict != REFUTES:
            inner = refine(v, c)
            bless = Value(BlessV(c.dom, c.var, c.rng, e.pos, e.neg, e.cno,
                                 inner), frozenset([alpha_contract(c)]))
            out.append(("wrap-fun", val_expr(bless), False))
        if verdict != PROVES:
            out.append(("wrap-non-proc",
                        BlameE(Blame(e.pos, e.cno, v, c)), False))
        return out
    if isinstance(c, ConsC):
        verdict = prove_pred(v, "cons?")
        if verdict != REFUTES:
            vp = refine(v, pred_contract("cons?"))
            pair = PrimApp("cons", (
                Mon(c.car, *labels, PrimApp("car", (val_expr(vp),), e.pos)),
                Mon(c.cdr, *labels, PrimApp("cdr", (val_expr(vp),), e.pos)),
            ), e.pos)
            out.append(("check-pair", pair, False))
        if verdict != PROVES:
            out.append(("check-pair-blame",
                        BlameE(Blame(e.pos, e.cno, v, c)), False))
        return out
    if isinstance(c, RecC):
        return [("check-unroll",
                 Mon(unroll_recc(c), *labels, val_expr(v)), False)]
    if isinstance(c, AndC):
        return [("check-and",
                 Mon(c.right, *labels, Mon(c.left, *labels, val_expr(v))),
                 False)]
    if isinstance(c, OrC):
        verdict = prove_contract(v, c.left)
        if verdict == PROVES:
            return [("check-or-proved", val_expr(v), False)]
        if verdict == REFUTES:
            return [("check-or-right", Mon(c.right, *labels, val_expr(v)),
                     False)]
        test = App(fc_compile(c.left, e.pos), val_expr(v), e.pos)
        return [("check-or-test",
                 If(test, val_expr(refine(v, c.left)),
                    Mon(c.right, *labels, val_expr(v))), False)]
    raise Stuck(f"no monitor rule for {c}")


def step(m: ModCtx, e: Expr):
    """All one-step successors of e, with rule names."""
    found = find_redex(e)
    if found is None:
        return []
    redex, rebuild = found
    out = []
    for rule, res, aborts in contract_redex(m, redex):
        out.append((rule, res if aborts else rebuild(res)))
    return out


def step_exprs(m: ModCtx, e: Expr):
    return [s for _, s in step(m, e)]


# ---------------------------------------------------------------------------
# Whole-program evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    answers: set                 # of Answer
    exhausted: bool
    steps: int
    seen: int


def answer_of(e: Expr) -> Optional[Answer]:
    if isinstance(e, BlameE):
        return Err(e.blame)
    v = value_of_expr(e)
    if v is not None and not splittable(v):
        return Val(alpha_value(v))
    return None


def eval_term(p_or_m, main: Optional[Expr] = None, budget: int = 100_000,
              include_demonic: bool = False) -> EvalResult:
    """Breadth-first closure of step over `begin prelude main`; collects
    alpha-deduplicated answers at normal forms.  Demonic-blamed answers are
    dropped unless include_demonic is set."""
    if isinstance(p_or_m, Program):
        m = module_context(p_or_m)
        main = p_or_m.main
    else:
        m = p_or_m
        assert main is not None
    start = begin_program(m, main)
    answers: set = set()
    seen = {start}
    frontier = [start]
    steps = 0
    exhausted = False
    while frontier:
        if steps >= budget:
            exhausted = True
            break
        nxt = []
        for e in frontier:
            if steps >= budget:
                exhausted = True
                break
            steps += 1
            a = answer_of(e)
            if a is not None:
                if not (isinstance(a, Err) and a.blame.blamed == DEMONIC
                        and not include_demonic):
                    answers.add(_alpha_answer(a))
                continue
            for _, s in step(m, e):
                if s not in seen:
                    seen.add(s)
                    nxt.append(s)
        frontier = nxt
    if frontier:
        exhausted = True
    return EvalResult(answers, exhausted, steps, len(seen))


def alpha_key(e: Expr) -> str:
    return skey(alpha_expr(e))


def _alpha_answer(a: Answer) -> Answer:
    if isinstance(a, Val):
        return Val(alpha_value(a.value))
    return Err(a.blame.alpha({}, [0]))
