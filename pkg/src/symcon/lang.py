"""Surface syntax, abstract syntax, and well-formedness checking.

Programs are sequences of `(module name contract body)` definitions followed
by one main expression, written as s-expressions.  Contracts on module
boundaries are the only place specifications enter the language; the
evaluator inserts monitors when module references cross a boundary.

The core grammar is deliberately small: unary functions, naturals, booleans,
pairs and the empty list, twelve primitive operations, and six contract
constructors.  `define-contract` is sugar expanded by substitution before
anything else looks at the program.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


def _node_hash(self):
    try:
        return object.__getattribute__(self, "_h")
    except AttributeError:
        pass
    h = hash((type(self).__name__,)
             + tuple(getattr(self, f) for f in self.__dataclass_fields__))
    object.__setattr__(self, "_h", h)
    return h


def _node_eq(self, other):
    if self is other:
        return True
    if type(self) is not type(other):
        return NotImplemented
    if _node_hash(self) != _node_hash(other):
        return False
    fields = self.__dataclass_fields__
    return all(getattr(self, f) == getattr(other, f) for f in fields)


def node(cls):
    """Frozen dataclass with a lazily cached structural hash.  Syntax and
    value trees are compared and hashed constantly during state-space
    exploration; caching makes both near O(1) on shared structure."""
    cls = dataclass(frozen=True)(cls)
    cls.__hash__ = _node_hash
    cls.__eq__ = _node_eq
    return cls


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

TOP_RENDER = "†"        # dagger, the top-level party
LANG_RENDER = "Λ"       # capital lambda, the language itself
DEMONIC_NAME = "demonic"     # reserved; never usable as a module name


@node
class Label:
    """A blame party: a module name, the top level, the language, or the
    demonic context."""

    kind: str                     # "module" | "top" | "lang" | "demonic"
    name: Optional[str] = None

    def render(self) -> str:
        if self.kind == "module":
            return self.name or "?"
        if self.kind == "top":
            return TOP_RENDER
        if self.kind == "lang":
            return LANG_RENDER
        return DEMONIC_NAME

    @staticmethod
    def module(name: str) -> "Label":
        return Label("module", name)


TOP = Label("top")
LANG = Label("lang")
DEMONIC = Label("demonic")


# ---------------------------------------------------------------------------
# Contracts
# ---------------------------------------------------------------------------

@node
class Pred:
    expr: "Expr"


@node
class DepFun:
    dom: "Contract"
    var: str
    rng: "Contract"


@node
class ConsC:
    car: "Contract"
    cdr: "Contract"


@node
class OrC:
    left: "Contract"
    right: "Contract"


@node
class AndC:
    left: "Contract"
    right: "Contract"


@node
class RecC:
    var: str
    body: "Contract"


@node
class CVar:
    name: str


Contract = Union[Pred, DepFun, ConsC, OrC, AndC, RecC, CVar]


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------
#
# Literal forms (Num/Bool/Empty/Opaque/Lam) double as value forms; ValE embeds
# an already-computed runtime value (a values.Value) and only appears during
# reduction, as do Mon and BlameE.

@node
class ModRef:
    name: str
    frm: Label


@node
class Var:
    name: str


@node
class Num:
    n: int


@node
class Bool:
    b: bool


@node
class Empty:
    pass


@node
class Opq:
    pass


@node
class Lam:
    var: str
    body: "Expr"


@node
class Rec:
    var: str
    body: "Expr"


@node
class App:
    fn: "Expr"
    arg: "Expr"
    site: Optional[Label]


@node
class If:
    test: "Expr"
    then: "Expr"
    els: "Expr"


@node
class PrimApp:
    op: str
    args: tuple
    site: Optional[Label]


@node
class Mon:
    con: Contract
    pos: Label
    neg: Label
    cno: Label
    body: "Expr"


@node
class ValE:
    """An embedded runtime value (values.Value); internal only."""

    value: object


@node
class BlameE:
    """An embedded blame record (values.Blame); internal only."""

    blame: object


Expr = Union[ModRef, Var, Num, Bool, Empty, Opq, Lam, Rec, App, If, PrimApp,
             Mon, ValE, BlameE]


# Primitive operations and their arities.
OPS = {
    "succ": 1, "+": 2, "=": 2, "cons": 2, "car": 1, "cdr": 1,
    "nat?": 1, "bool?": 1, "empty?": 1, "cons?": 1, "proc?": 1, "false?": 1,
}
PREDICATES = ("nat?", "bool?", "empty?", "cons?", "proc?", "false?")


# ---------------------------------------------------------------------------
# Programs
# ---------------------------------------------------------------------------

@node
class ModuleDef:
    name: str
    contract: Contract
    body: Expr                 # a value form, or Opq() for opaque modules

    @property
    def is_opaque(self) -> bool:
        return isinstance(self.body, Opq)


@node
class Program:
    modules: tuple
    main: Expr
    contract_defs: tuple = ()        # ((name, contract), ...) for display
    options: tuple = ()              # #lang header words, if any

    def module(self, name: str) -> Optional[ModuleDef]:
        for m in self.modules:
            if m.name == name:
                return m
        return None


# ---------------------------------------------------------------------------
# Generic structural key: a deterministic total order over all syntax and
# value trees.  Used for canonical sorting, hashing of sets, and state
# canonicalization; never depends on hash randomization.
# ---------------------------------------------------------------------------

def skey(x) -> str:
    if x is None:
        return "~"
    if isinstance(x, bool):
        return "b" + ("1" if x else "0")
    if isinstance(x, int):
        return "i%d" % x
    if isinstance(x, str):
        return "s" + x
    if isinstance(x, tuple):
        return "(" + " ".join(skey(e) for e in x) + ")"
    if isinstance(x, frozenset):
        return "{" + " ".join(sorted(skey(e) for e in x)) + "}"
    if dataclasses.is_dataclass(x):
        parts = [type(x).__name__]
        for f in dataclasses.fields(x):
            parts.append(skey(getattr(x, f.name)))
        return "(" + " ".join(parts) + ")"
    raise TypeError(f"skey: unsupported {type(x)!r}")


def sort_by_key(items):
    return sorted(items, key=skey)


# ---------------------------------------------------------------------------
# Free variables and substitution
# ---------------------------------------------------------------------------

def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Lam) or isinstance(e, Rec):
        return free_vars(e.body) - {e.var}
    if isinstance(e, App):
        return free_vars(e.fn) | free_vars(e.arg)
    if isinstance(e, If):
        return free_vars(e.test) | free_vars(e.then) | free_vars(e.els)
    if isinstance(e, PrimApp):
        out = frozenset()
        for a in e.args:
            out |= free_vars(a)
        return out
    if isinstance(e, Mon):
        return contract_free_vars(e.con) | free_vars(e.body)
    return frozenset()   # literals, ModRef, ValE, BlameE


def contract_free_vars(c: Contract) -> frozenset:
    """Free lambda-variables of a contract (contract variables are separate)."""
    if isinstance(c, Pred):
        return free_vars(c.expr)
    if isinstance(c, DepFun):
        return contract_free_vars(c.dom) | (contract_free_vars(c.rng) - {c.var})
    if isinstance(c, (ConsC, OrC, AndC)):
        l, r = _parts(c)
        return contract_free_vars(l) | contract_free_vars(r)
    if isinstance(c, RecC):
        return contract_free_vars(c.body)
    return frozenset()   # CVar


def contract_cvars(c: Contract) -> frozenset:
    if isinstance(c, CVar):
        return frozenset([c.name])
    if isinstance(c, Pred):
        return frozenset()
    if isinstance(c, DepFun):
        return contract_cvars(c.dom) | contract_cvars(c.rng)
    if isinstance(c, (ConsC, OrC, AndC)):
        l, r = _parts(c)
        return contract_cvars(l) | contract_cvars(r)
    if isinstance(c, RecC):
        return contract_cvars(c.body) - {c.var}
    return frozenset()


def _parts(c):
    if isinstance(c, ConsC):
        return c.car, c.cdr
    return c.left, c.right


_rename_counter = [0]


def _freshen(name: str) -> str:
    _rename_counter[0] += 1
    base = name.split("%")[0]
    return f"{base}%{_rename_counter[0]}"


def subst(e: Expr, x: str, r: Expr) -> Expr:
    """Capture-avoiding [r/x]e.  Embedded values are closed and untouched."""
    if isinstance(e, Var):
        return r if e.name == x else e
    if isinstance(e, (Lam, Rec)):
        if e.var == x:
            return e
        if e.var in free_vars(r):
            nv = _freshen(e.var)
            body = subst(e.body, e.var, Var(nv))
            return type(e)(nv, subst(body, x, r))
        return type(e)(e.var, subst(e.body, x, r))
    if isinstance(e, App):
        return App(subst(e.fn, x, r), subst(e.arg, x, r), e.site)
    if isinstance(e, If):
        return If(subst(e.test, x, r), subst(e.then, x, r), subst(e.els, x, r))
    if isinstance(e, PrimApp):
        return PrimApp(e.op, tuple(subst(a, x, r) for a in e.args), e.site)
    if isinstance(e, Mon):
        return Mon(subst_contract(e.con, x, r), e.pos, e.neg, e.cno,
                   subst(e.body, x, r))
    return e


def subst_contract(c: Contract, x: str, r: Expr) -> Contract:
    if isinstance(c, Pred):
        return Pred(subst(c.expr, x, r))
    if isinstance(c, DepFun):
        dom = subst_contract(c.dom, x, r)
        if c.var == x:
            return DepFun(dom, c.var, c.rng)
        if c.var in free_vars(r):
            nv = _freshen(c.var)
            rng = subst_contract(c.rng, c.var, Var(nv))
            return DepFun(dom, nv, subst_contract(rng, x, r))
        return DepFun(dom, c.var, subst_contract(c.rng, x, r))
    if isinstance(c, ConsC):
        return ConsC(subst_contract(c.car, x, r), subst_contract(c.cdr, x, r))
    if isinstance(c, OrC):
        return OrC(subst_contract(c.left, x, r), subst_contract(c.right, x, r))
    if isinstance(c, AndC):
        return AndC(subst_contract(c.left, x, r), subst_contract(c.right, x, r))
    if isinstance(c, RecC):
        return RecC(c.var, subst_contract(c.body, x, r))
    return c


def subst_cvar(c: Contract, x: str, r: Contract) -> Contract:
    """Substitute a contract r for contract variable x in c."""
    if isinstance(c, CVar):
        return r if c.name == x else c
    if isinstance(c, Pred):
        return c
    if isinstance(c, DepFun):
        return DepFun(subst_cvar(c.dom, x, r), c.var, subst_cvar(c.rng, x, r))
    if isinstance(c, ConsC):
        return ConsC(subst_cvar(c.car, x, r), subst_cvar(c.cdr, x, r))
    if isinstance(c, OrC):
        return OrC(subst_cvar(c.left, x, r), subst_cvar(c.right, x, r))
    if isinstance(c, AndC):
        return AndC(subst_cvar(c.left, x, r), subst_cvar(c.right, x, r))
    if isinstance(c, RecC):
        if c.var == x:
            return c
        return RecC(c.var, subst_cvar(c.body, x, r))
    return c


def unroll_recc(c: RecC) -> Contract:
    return subst_cvar(c.body, c.var, c)


# ---------------------------------------------------------------------------
# Alpha normalization: rename every binder to a canonical positional name so
# that structural equality coincides with alpha equivalence.
# ---------------------------------------------------------------------------

def alpha_expr(e: Expr, env=None, counter=None) -> Expr:
    env = env or {}
    counter = counter if counter is not None else [0]
    return _alpha_e(e, env, counter)


def _next(counter, prefix):
    counter[0] += 1
    return f"{prefix}{counter[0]}"


def _alpha_e(e, env, counter):
    if isinstance(e, Var):
        return Var(env.get(e.name, e.name))
    if isinstance(e, (Lam, Rec)):
        nv = _next(counter, "v")
        return type(e)(nv, _alpha_e(e.body, {**env, e.var: nv}, counter))
    if isinstance(e, App):
        return App(_alpha_e(e.fn, env, counter), _alpha_e(e.arg, env, counter),
                   e.site)
    if isinstance(e, If):
        return If(_alpha_e(e.test, env, counter), _alpha_e(e.then, env, counter),
                  _alpha_e(e.els, env, counter))
    if isinstance(e, PrimApp):
        return PrimApp(e.op, tuple(_alpha_e(a, env, counter) for a in e.args),
                       e.site)
    if isinstance(e, Mon):
        return Mon(_alpha_c(e.con, env, counter), e.pos, e.neg, e.cno,
                   _alpha_e(e.body, env, counter))
    if isinstance(e, ValE):
        return ValE(e.value.alpha(env, counter))
    if isinstance(e, BlameE):
        return BlameE(e.blame.alpha(env, counter))
    return e


_alpha_cache: dict = {}


def alpha_contract(c: Contract, env=None, counter=None) -> Contract:
    if env is None and counter is None:
        hit = _alpha_cache.get(c)
        if hit is None:
            hit = _alpha_c(c, {}, [0])
            _alpha_cache[c] = hit
        return hit
    env = env or {}
    counter = counter if counter is not None else [0]
    return _alpha_c(c, env, counter)


def _alpha_c(c, env, counter):
    if isinstance(c, Pred):
        return Pred(_alpha_e(c.expr, env, counter))
    if isinstance(c, DepFun):
        dom = _alpha_c(c.dom, env, counter)
        nv = _next(counter, "v")
        return DepFun(dom, nv, _alpha_c(c.rng, {**env, c.var: nv}, counter))
    if isinstance(c, ConsC):
        return ConsC(_alpha_c(c.car, env, counter), _alpha_c(c.cdr, env, counter))
    if isinstance(c, OrC):
        return OrC(_alpha_c(c.left, env, counter), _alpha_c(c.right, env, counter))
    if isinstance(c, AndC):
        return AndC(_alpha_c(c.left, env, counter), _alpha_c(c.right, env, counter))
    if isinstance(c, RecC):
        nv = _next(counter, "X")
        return RecC(nv, _alpha_c(c.body, {**env, c.var: nv}, counter))
    return CVar(env.get(c.name, c.name))


def contracts_alpha_equal(c1: Contract, c2: Contract) -> bool:
    return alpha_contract(c1) == alpha_contract(c2)


# ---------------------------------------------------------------------------
# Flat / higher-order classification
# ---------------------------------------------------------------------------

def classify_contract(c: Contract) -> str:
    """A contract is higher-order iff it syntactically contains a function
    contract (looking through rec/c bodies, not through predicate code)."""
    return "higher-order" if _has_depfun(c) else "flat"


def is_flat(c: Contract) -> bool:
    return not _has_depfun(c)


def _has_depfun(c: Contract) -> bool:
    if isinstance(c, DepFun):
        return True
    if isinstance(c, Pred) or isinstance(c, CVar):
        return False
    if isinstance(c, RecC):
        return _has_depfun(c.body)
    l, r = _parts(c)
    return _has_depfun(l) or _has_depfun(r)


# ---------------------------------------------------------------------------
# S-expression reader
# ---------------------------------------------------------------------------

class SyntaxError_(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.msg = msg
        self.line = line
        self.col = col


@dataclass
class SAtom:
    text: str
    line: int
    col: int


@dataclass
class SList:
    items: list
    line: int
    col: int


_TOKEN = re.compile(r"""\(|\)|[^\s();]+""")


def _tokenize(text: str):
    line = 1
    col = 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isspace():
            col += 1
            i += 1
            continue
        m = _TOKEN.match(text, i)
        if not m:
            raise SyntaxError_(f"unreadable character {ch!r}", line, col)
        tok = m.group(0)
        yield tok, line, col
        col += len(tok)
        i = m.end()


def read_sexprs(text: str):
    """Read all top-level s-expressions; returns (header_words, forms)."""
    header = ()
    lines = text.split("\n")
    if lines and lines[0].lstrip().startswith("#lang"):
        words = lines[0].split()
        if len(words) < 2 or words[1] != "var":
            raise SyntaxError_("malformed #lang header", 1, 1)
        header = tuple(words[2:])
        text = "\n".join([""] + lines[1:])
    stack = [SList([], 0, 0)]
    for tok, line, col in _tokenize(text):
        if tok == "(":
            stack.append(SList([], line, col))
        elif tok == ")":
            if len(stack) == 1:
                raise SyntaxError_("unbalanced ')'", line, col)
            done = stack.pop()
            stack[-1].items.append(done)
        else:
            stack[-1].items.append(SAtom(tok, line, col))
    if len(stack) != 1:
        top = stack[-1]
        raise SyntaxError_("unclosed '('", top.line, top.col)
    return header, stack[0].items


# ---------------------------------------------------------------------------
# Parser proper
# ---------------------------------------------------------------------------

class UnknownOperator(SyntaxError_):
    pass


class UnboundContractAlias(SyntaxError_):
    pass


_NAT = re.compile(r"^[0-9]+$")
LAMBDA_WORDS = ("λ", "lambda")
OPAQUE_WORDS = ("•", "opaque", "●")
RESERVED = set(OPS) | {"module", "define-contract", "if", "rec", "mon",
                       "pred", "->", "->d", "cons/c", "or/c", "and/c",
                       "rec/c", "true", "false", "#t", "#f", "empty",
                       DEMONIC_NAME} | set(LAMBDA_WORDS) | set(OPAQUE_WORDS)

_fc_fresh = [0]


def fresh_var(prefix: str = "x") -> str:
    """Deterministic fresh-variable generation, scoped to a run."""
    _fc_fresh[0] += 1
    return f"%{prefix}{_fc_fresh[0]}"


def reset_fresh(n: int = 0) -> None:
    _fc_fresh[0] = n
    _rename_counter[0] = n


def parse_program(text: str) -> Program:
    """Parse a whole program: contract aliases, modules, one main expression."""
    header, forms = read_sexprs(text)
    module_names = []
    for f in forms:
        if isinstance(f, SList) and f.items and _atom_is(f.items[0], "module"):
            if len(f.items) != 4 or not isinstance(f.items[1], SAtom):
                raise SyntaxError_("module needs (module name contract body)",
                                   f.line, f.col)
            module_names.append(f.items[1].text)

    aliases: dict = {}
    alias_order = []
    modules = []
    mains = []
    for f in forms:
        if isinstance(f, SList) and f.items and _atom_is(f.items[0], "define-contract"):
            if len(f.items) != 3 or not isinstance(f.items[1], SAtom):
                raise SyntaxError_("define-contract needs a name and a contract",
                                   f.line, f.col)
            name = f.items[1].text
            con = _parse_contract(f.items[2], aliases, (), module_names)
            aliases[name] = con
            alias_order.append((name, con))
        elif isinstance(f, SList) and f.items and _atom_is(f.items[0], "module"):
            name = f.items[1].text
            con = _parse_contract(f.items[2], aliases, (), module_names)
            body = _parse_expr(f.items[3], aliases, (), module_names)
            modules.append((name, con, body, f))
        else:
            mains.append(f)

    if len(mains) != 1:
        where = mains[1] if len(mains) > 1 else None
        raise SyntaxError_("expected exactly one main expression",
                           getattr(where, "line", 0), getattr(where, "col", 0))
    main = _parse_expr(mains[0], aliases, (), module_names)

    labeled_modules = tuple(
        ModuleDef(name, _label_contract(con, Label.module(name)),
                  _label_expr(body, Label.module(name)))
        for name, con, body, _ in modules)
    return Program(labeled_modules, _label_expr(main, TOP),
                   tuple(alias_order), header)


def _atom_is(s, word):
    return isinstance(s, SAtom) and s.text == word


def _parse_expr(s, aliases, bound, module_names) -> Expr:
    if isinstance(s, SAtom):
        t = s.text
        if _NAT.match(t):
            return Num(int(t))
        if t in ("true", "#t"):
            return Bool(True)
        if t in ("false", "#f"):
            return Bool(False)
        if t == "empty":
            return Empty()
        if t in OPAQUE_WORDS:
            return Opq()
        if t in bound:
            return Var(t)
        if t in module_names:
            return ModRef(t, TOP)   # frm fixed by the labeling pass
        if t in OPS:
            raise UnknownOperator(f"operator {t} must be applied", s.line, s.col)
        return Var(t)               # unbound; flagged by check_wellformed
    items = s.items
    if not items:
        raise SyntaxError_("empty application", s.line, s.col)
    head = items[0]
    if isinstance(head, SAtom):
        t = head.text
        if t in LAMBDA_WORDS or t == "rec":
            if (len(items) != 3 or not isinstance(items[1], SList)
                    or len(items[1].items) != 1
                    or not isinstance(items[1].items[0], SAtom)):
                raise SyntaxError_(f"({t} (x) e) takes one parameter",
                                   s.line, s.col)
            v = items[1].items[0].text
            body = _parse_expr(items[2], aliases, bound + (v,), module_names)
            return Lam(v, body) if t != "rec" else Rec(v, body)
        if t == "if":
            if len(items) != 4:
                raise SyntaxError_("(if test then else)", s.line, s.col)
            a, b, c = (_parse_expr(x, aliases, bound, module_names)
                       for x in items[1:])
            return If(a, b, c)
        if t in OPS and t not in bound:
            if len(items) - 1 != OPS[t]:
                raise SyntaxError_(f"{t} expects {OPS[t]} argument(s)",
                                   s.line, s.col)
            args = tuple(_parse_expr(x, aliases, bound, module_names)
                         for x in items[1:])
            return PrimApp(t, args, None)
        if t == "mon":
            raise SyntaxError_("mon is internal syntax", s.line, s.col)
    if len(items) != 2:
        raise SyntaxError_("application takes one argument", s.line, s.col)
    fn = _parse_expr(items[0], aliases, bound, module_names)
    arg = _parse_expr(items[1], aliases, bound, module_names)
    return App(fn, arg, None)


def _parse_contract(s, aliases, cbound, module_names) -> Contract:
    if isinstance(s, SAtom):
        t = s.text
        if t in cbound:
            return CVar(t)
        if t in aliases:
            return aliases[t]
        if t in PREDICATES:
            v = fresh_var("p")
            return Pred(Lam(v, PrimApp(t, (Var(v),), None)))
        raise UnboundContractAlias(f"unknown contract {t}", s.line, s.col)
    items = s.items
    if not items or not isinstance(items[0], SAtom):
        raise SyntaxError_("bad contract form", s.line, s.col)
    t = items[0].text
    if t == "pred":
        if len(items) != 2:
            raise SyntaxError_("(pred e)", s.line, s.col)
        return Pred(_parse_expr(items[1], aliases, (), module_names))
    if t == "->":
        if len(items) != 3:
            raise SyntaxError_("(-> c d)", s.line, s.col)
        dom = _parse_contract(items[1], aliases, cbound, module_names)
        rng = _parse_contract(items[2], aliases, cbound, module_names)
        return DepFun(dom, fresh_var("d"), rng)
    if t == "->d":
        if (len(items) != 3 or not isinstance(items[2], SList)
                or len(items[2].items) != 3
                or not _atom_in(items[2].items[0], LAMBDA_WORDS)):
            raise SyntaxError_("(->d c (λ (x) d))", s.line, s.col)
        dom = _parse_contract(items[1], aliases, cbound, module_names)
        lam = items[2]
        params = lam.items[1]
        if not isinstance(params, SList) or len(params.items) != 1:
            raise SyntaxError_("->d binder takes one parameter", s.line, s.col)
        var = params.items[0].text
        rng = _parse_contract(lam.items[2], aliases, cbound, module_names)
        return DepFun(dom, var, rng)
    if t == "cons/c" or t == "or/c" or t == "and/c":
        if len(items) != 3:
            raise SyntaxError_(f"({t} c d)", s.line, s.col)
        l = _parse_contract(items[1], aliases, cbound, module_names)
        r = _parse_contract(items[2], aliases, cbound, module_names)
        return {"cons/c": ConsC, "or/c": OrC, "and/c": AndC}[t](l, r)
    if t == "rec/c":
        if len(items) != 3 or not isinstance(items[1], SAtom):
            raise SyntaxError_("(rec/c X c)", s.line, s.col)
        v = items[1].text
        return RecC(v, _parse_contract(items[2], aliases, cbound + (v,),
                                       module_names))
    raise SyntaxError_(f"unknown contract form {t}", s.line, s.col)


def _atom_in(s, words):
    return isinstance(s, SAtom) and s.text in words


# Labeling: give every application, primitive application, and module
# reference the label of its enclosing component.

def _label_expr(e: Expr, lab: Label) -> Expr:
    if isinstance(e, ModRef):
        return ModRef(e.name, lab)
    if isinstance(e, (Lam, Rec)):
        return type(e)(e.var, _label_expr(e.body, lab))
    if isinstance(e, App):
        return App(_label_expr(e.fn, lab), _label_expr(e.arg, lab), lab)
    if isinstance(e, If):
        return If(_label_expr(e.test, lab), _label_expr(e.then, lab),
                  _label_expr(e.els, lab))
    if isinstance(e, PrimApp):
        return PrimApp(e.op, tuple(_label_expr(a, lab) for a in e.args), lab)
    if isinstance(e, Mon):
        return Mon(_label_contract(e.con, lab), e.pos, e.neg, e.cno,
                   _label_expr(e.body, lab))
    return e


def _label_contract(c: Contract, lab: Label) -> Contract:
    if isinstance(c, Pred):
        return Pred(_label_expr(c.expr, lab))
    if isinstance(c, DepFun):
        return DepFun(_label_contract(c.dom, lab), c.var,
                      _label_contract(c.rng, lab))
    if isinstance(c, ConsC):
        return ConsC(_label_contract(c.car, lab), _label_contract(c.cdr, lab))
    if isinstance(c, OrC):
        return OrC(_label_contract(c.left, lab), _label_contract(c.right, lab))
    if isinstance(c, AndC):
        return AndC(_label_contract(c.left, lab), _label_contract(c.right, lab))
    if isinstance(c, RecC):
        return RecC(c.var, _label_contract(c.body, lab))
    return c


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------

def pp_expr(e: Expr) -> str:
    if isinstance(e, ModRef):
        return e.name
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Num):
        return str(e.n)
    if isinstance(e, Bool):
        return "true" if e.b else "false"
    if isinstance(e, Empty):
        return "empty"
    if isinstance(e, Opq):
        return "•"
    if isinstance(e, Lam):
        return f"(λ ({e.var}) {pp_expr(e.body)})"
    if isinstance(e, Rec):
        return f"(rec ({e.var}) {pp_expr(e.body)})"
    if isinstance(e, App):
        return f"({pp_expr(e.fn)} {pp_expr(e.arg)})"
    if isinstance(e, If):
        return f"(if {pp_expr(e.test)} {pp_expr(e.then)} {pp_expr(e.els)})"
    if isinstance(e, PrimApp):
        return "(" + " ".join([e.op] + [pp_expr(a) for a in e.args]) + ")"
    if isinstance(e, Mon):
        return (f"(mon {pp_contract(e.con)} {e.pos.render()} {e.neg.render()} "
                f"{e.cno.render()} {pp_expr(e.body)})")
    if isinstance(e, ValE):
        return e.value.pp()
    if isinstance(e, BlameE):
        return e.blame.pp()
    raise TypeError(f"pp_expr: {e!r}")


def pp_contract(c: Contract) -> str:
    if isinstance(c, Pred):
        base = base_pred_of(c)
        if base:
            return base
        return f"(pred {pp_expr(c.expr)})"
    if isinstance(c, DepFun):
        if c.var not in contract_free_vars(c.rng):
            return f"(-> {pp_contract(c.dom)} {pp_contract(c.rng)})"
        return (f"(->d {pp_contract(c.dom)} "
                f"(λ ({c.var}) {pp_contract(c.rng)}))")
    if isinstance(c, ConsC):
        return f"(cons/c {pp_contract(c.car)} {pp_contract(c.cdr)})"
    if isinstance(c, OrC):
        return f"(or/c {pp_contract(c.left)} {pp_contract(c.right)})"
    if isinstance(c, AndC):
        return f"(and/c {pp_contract(c.left)} {pp_contract(c.right)})"
    if isinstance(c, RecC):
        return f"(rec/c {c.var} {pp_contract(c.body)})"
    return c.name


def base_pred_of(c: Contract):
    """If c is a predicate contract over a single base operation (in either
    raw or eta-expanded form), return the operation name."""
    if not isinstance(c, Pred):
        return None
    e = c.expr
    if (isinstance(e, Lam) and isinstance(e.body, PrimApp)
            and len(e.body.args) == 1 and isinstance(e.body.args[0], Var)
            and e.body.args[0].name == e.var and e.body.op in PREDICATES):
        return e.body.op
    return None


def pred_contract(op: str) -> Pred:
    """The eta-expanded predicate contract for a base operation."""
    return Pred(Lam("%w", PrimApp(op, (Var("%w"),), None)))


def pp_program(p: Program) -> str:
    out = []
    if p.options:
        out.append("#lang var " + " ".join(p.options))
    for m in p.modules:
        body = "•" if m.is_opaque else pp_expr(m.body)
        out.append(f"(module {m.name} {pp_contract(m.contract)} {body})")
    out.append(pp_expr(p.main))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Well-formedness
# ---------------------------------------------------------------------------

@node
class Diagnostic:
    code: str
    message: str
    where: str = ""

    def __str__(self):
        loc = f" [{self.where}]" if self.where else ""
        return f"{self.code}: {self.message}{loc}"


def check_wellformed(p: Program) -> list:
    """Return all violated program invariants; an empty list means the
    program is well-formed."""
    diags: list = []
    seen = set()
    names = {m.name for m in p.modules}
    for m in p.modules:
        if m.name in seen:
            diags.append(Diagnostic("DuplicateModule",
                                    f"module {m.name} defined twice", m.name))
        seen.add(m.name)
        if m.name == DEMONIC_NAME or m.name in (TOP_RENDER, LANG_RENDER):
            diags.append(Diagnostic("ReservedModuleName",
                                    f"{m.name} is reserved", m.name))
        if not m.is_opaque and not _is_value_form(m.body):
            diags.append(Diagnostic("ModuleBodyNotValue",
                                    "module body must be a value", m.name))
        diags.extend(_check_expr(m.body, frozenset(), names, m.name,
                                 opaque_ok=m.is_opaque))
        diags.extend(_check_contract(m.contract, frozenset(), frozenset(),
                                     names, m.name))
        if not _is_closed_contract(m.contract):
            diags.append(Diagnostic("OpenContract",
                                    f"contract of {m.name} is not closed",
                                    m.name))
    diags.extend(_check_expr(p.main, frozenset(), names, "main",
                             opaque_ok=False))
    return diags


def _is_value_form(e: Expr) -> bool:
    if isinstance(e, (Num, Bool, Empty, Lam, ValE)):
        return True
    if isinstance(e, PrimApp) and e.op == "cons":
        return all(_is_value_form(a) for a in e.args)
    return False


def _is_closed_contract(c: Contract) -> bool:
    return not contract_free_vars(c) and not contract_cvars(c)


def _check_expr(e, bound, names, where, opaque_ok):
    diags = []
    if isinstance(e, Var):
        if e.name not in bound:
            diags.append(Diagnostic("UnboundVariable",
                                    f"unbound variable {e.name}", where))
    elif isinstance(e, Opq):
        if not opaque_ok:
            diags.append(Diagnostic("OpaqueOutsideModule",
                                    "• only allowed as an opaque module body",
                                    where))
    elif isinstance(e, ModRef):
        if e.name not in names:
            diags.append(Diagnostic("UnboundModule",
                                    f"unknown module {e.name}", where))
        if e.frm is None:
            diags.append(Diagnostic("MissingLabel", "module ref unlabeled", where))
    elif isinstance(e, (Lam, Rec)):
        diags.extend(_check_expr(e.body, bound | {e.var}, names, where, False))
    elif isinstance(e, App):
        if e.site is None:
            diags.append(Diagnostic("MissingLabel", "application unlabeled", where))
        diags.extend(_check_expr(e.fn, bound, names, where, False))
        diags.extend(_check_expr(e.arg, bound, names, where, False))
    elif isinstance(e, If):
        for sub in (e.test, e.then, e.els):
            diags.extend(_check_expr(sub, bound, names, where, False))
    elif isinstance(e, PrimApp):
        if e.op not in OPS:
            diags.append(Diagnostic("UnknownOperator", f"unknown op {e.op}", where))
        elif len(e.args) != OPS[e.op]:
            diags.append(Diagnostic("ArityMismatch",
                                    f"{e.op} expects {OPS[e.op]} args", where))
        if e.site is None:
            diags.append(Diagnostic("MissingLabel", "operation unlabeled", where))
        for sub in e.args:
            diags.extend(_check_expr(sub, bound, names, where, False))
    elif isinstance(e, (Mon, BlameE)):
        diags.append(Diagnostic("InternalFormInSource",
                                "monitors and blame are not source syntax",
                                where))
    return diags


def _check_contract(c, bound, cbound, names, where):
    diags = []
    if isinstance(c, Pred):
        diags.extend(_check_expr(c.expr, bound, names, where, False))
    elif isinstance(c, DepFun):
        diags.extend(_check_contract(c.dom, bound, cbound, names, where))
        diags.extend(_check_contract(c.rng, bound | {c.var}, cbound, names, where))
    elif isinstance(c, ConsC):
        diags.extend(_check_contract(c.car, bound, cbound, names, where))
        diags.extend(_check_contract(c.cdr, bound, cbound, names, where))
    elif isinstance(c, AndC):
        diags.extend(_check_contract(c.left, bound, cbound, names, where))
        diags.extend(_check_contract(c.right, bound, cbound, names, where))
    elif isinstance(c, OrC):
        if _has_depfun(c.left):
            code = ("TwoHigherOrderDisjuncts" if _has_depfun(c.right)
                    else "LeftDisjunctHigherOrder")
            diags.append(Diagnostic(code,
                                    "at most the right or/c disjunct may be "
                                    "higher-order", where))
        diags.extend(_check_contract(c.left, bound, cbound, names, where))
        diags.extend(_check_contract(c.right, bound, cbound, names, where))
    elif isinstance(c, RecC):
        if not _productive(c.body, c.var, guarded=False):
            diags.append(Diagnostic("NonProductiveRecursiveContract",
                                    f"rec/c {c.var} is not productive", where))
        diags.extend(_check_contract(c.body, bound, cbound | {c.var}, names,
                                     where))
    elif isinstance(c, CVar):
        if c.name not in cbound:
            diags.append(Diagnostic("UnboundContractVariable",
                                    f"unbound contract variable {c.name}",
                                    where))
    return diags


def _productive(c, var, guarded):
    """Every occurrence of var must sit under a DepFun or ConsC constructor."""
    if isinstance(c, CVar):
        return guarded or c.name != var
    if isinstance(c, Pred):
        return True
    if isinstance(c, DepFun):
        return (_productive(c.dom, var, True)
                and _productive(c.rng, var, True))
    if isinstance(c, ConsC):
        return (_productive(c.car, var, True)
                and _productive(c.cdr, var, True))
    if isinstance(c, (OrC, AndC)):
        l, r = _parts(c)
        return _productive(l, var, guarded) and _productive(r, var, guarded)
    if isinstance(c, RecC):
        if c.var == var:
            return True
        return _productive(c.body, var, guarded)
    return True
