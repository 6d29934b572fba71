"""Regulatory environment: a small rule language for norms and its evaluator.

Grammar (whitespace and ``# comments`` are insignificant)::

    normset   := norm*
    norm      := "norm" INT "tag" ("Apo" | "NonApo") "when" expr "then" effect (";" effect)* [";"]
    expr      := conj ("or" conj)*
    conj      := neg ("and" neg)*
    neg       := "not" neg | "(" expr ")" | FLAG | ATTR CMP literal
    effect    := ("wealth" | "debt") ("+=" | "-=") INT
               | "status" "=" STATUS
               | "home" "=" ("new" | "none")
               | "prison" [INT]

``FLAG`` is one of the boolean attributes (``month_boundary``, ``slept_street``,
``stole_food``, ``has_home``); ``ATTR`` is ``status`` (compared with ``==`` or
``!=`` against a status name) or a numeric attribute (``wealth``, ``debt``,
``age``, ``income``, ``rent``) compared with a signed number such as ``-5``,
``0.25`` or ``1e-05``.  Effect amounts and day counts are non-negative
integers.  ``prison`` without a day count uses the
scenario's default sentence.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import STEPS_PER_DAY, AgentArrays, AgentState, Clock, Status

FLAGS = ("month_boundary", "slept_street", "stole_food", "has_home")
NUMERIC = ("wealth", "debt", "age", "income", "rent")
ATTRIBUTES = FLAGS + NUMERIC + ("status",)

_CMP = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


class Tag(str, Enum):
    APO = "Apo"
    NON_APO = "NonApo"


class NormError(Exception):
    pass


class ParseError(NormError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class UnknownAttribute(ParseError):
    pass


class DuplicateId(NormError):
    pass


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Flag:
    name: str


@dataclass(frozen=True)
class Compare:
    attr: str
    op: str
    value: Union[int, float, Status]


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


Expr = Union[Flag, Compare, Not, And, Or]


@dataclass(frozen=True)
class WealthDelta:
    amount: int


@dataclass(frozen=True)
class DebtDelta:
    amount: int


@dataclass(frozen=True)
class SetStatus:
    status: Status


@dataclass(frozen=True)
class GrantHome:
    pass


@dataclass(frozen=True)
class RevokeHome:
    pass


@dataclass(frozen=True)
class SendToPrison:
    days: Optional[int] = None


Effect = Union[WealthDelta, DebtDelta, SetStatus, GrantHome, RevokeHome, SendToPrison]


@dataclass(frozen=True)
class Norm:
    id: int
    tag: Tag
    precondition: Expr
    effects: Tuple[Effect, ...]


@dataclass(frozen=True)
class NormSet:
    norms: Tuple[Norm, ...] = ()

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.norms, key=lambda n: n.id))
        ids = [n.id for n in ordered]
        if len(set(ids)) != len(ids):
            raise DuplicateId(f"duplicate norm ids in {ids}")
        object.__setattr__(self, "norms", ordered)

    def __iter__(self) -> Iterator[Norm]:
        return iter(self.norms)

    def __len__(self) -> int:
        return len(self.norms)

    @property
    def ids(self) -> Tuple[int, ...]:
        return tuple(n.id for n in self.norms)

    def get(self, norm_id: int) -> Norm:
        for n in self.norms:
            if n.id == norm_id:
                return n
        raise KeyError(norm_id)

    def subset(self, ids: Iterable[int]) -> "NormSet":
        keep = set(ids)
        return NormSet(tuple(n for n in self.norms if n.id in keep))


# --- lexer / parser --------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+) |
    (?P<nl>\n) |
    (?P<comment>\#[^\n]*) |
    (?P<num>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?) |
    (?P<ident>[A-Za-z_][A-Za-z0-9_]*) |
    (?P<op>==|!=|<=|>=|\+=|-=|<|>|=|;|\(|\))
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # num | ident | op | eof
    text: str
    line: int
    col: int


def tokenize(source: str) -> List[Token]:
    tokens, pos, line, line_start = [], 0, 1, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind in ("num", "ident", "op"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Optional[Token] = None, cls=ParseError) -> ParseError:
        tok = tok or self.tok
        return cls(message, tok.line, tok.col)

    def next(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.tok.kind in ("ident", "op") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")
        return self.next()

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            raise self.error(f"expected a non-negative integer, found {tok.text or 'end of input'!r}")
        self.next()
        return int(tok.text)

    def normset(self) -> NormSet:
        norms: List[Norm] = []
        seen: Dict[int, Token] = {}
        while self.tok.kind != "eof":
            start = self.tok
            norm = self.norm()
            if norm.id in seen:
                raise DuplicateId(f"{start.line}:{start.col}: norm {norm.id} already defined")
            seen[norm.id] = start
            norms.append(norm)
        return NormSet(tuple(norms))

    def norm(self) -> Norm:
        self.expect("norm")
        norm_id = self.integer()
        self.expect("tag")
        tok = self.next()
        try:
            tag = Tag(tok.text)
        except ValueError:
            raise self.error(f"tag must be Apo or NonApo, found {tok.text!r}", tok) from None
        self.expect("when")
        pre = self.expr()
        self.expect("then")
        effects = [self.effect()]
        while self.at(";"):
            self.next()
            if self.tok.kind == "eof" or self.at("norm"):
                break
            effects.append(self.effect())
        if not (self.tok.kind == "eof" or self.at("norm")):
            raise self.error(f"expected ';', 'norm' or end of input, found {self.tok.text!r}")
        return Norm(norm_id, tag, pre, tuple(effects))

    def expr(self) -> Expr:
        left = self.conj()
        while self.at("or"):
            self.next()
            left = Or(left, self.conj())
        return left

    def conj(self) -> Expr:
        left = self.neg()
        while self.at("and"):
            self.next()
            left = And(left, self.neg())
        return left

    def neg(self) -> Expr:
        if self.at("not"):
            self.next()
            return Not(self.neg())
        if self.at("("):
            self.next()
            inner = self.expr()
            self.expect(")")
            return inner
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"expected a condition, found {tok.text or 'end of input'!r}")
        self.next()
        name = tok.text
        if name in FLAGS:
            return Flag(name)
        if name not in ATTRIBUTES:
            raise self.error(f"unknown attribute {name!r}", tok, UnknownAttribute)
        op_tok = self.tok
        if op_tok.text not in _CMP:
            raise self.error(f"expected a comparison after {name!r}", op_tok)
        self.next()
        if name == "status":
            if op_tok.text not in ("==", "!="):
                raise self.error("status only supports == and !=", op_tok)
            return Compare(name, op_tok.text, self.status_literal())
        val = self.tok
        if val.kind != "num":
            raise self.error(f"expected a number, found {val.text or 'end of input'!r}")
        self.next()
        number = int(val.text) if val.text.lstrip("-").isdigit() else float(val.text)
        return Compare(name, op_tok.text, number)

    def status_literal(self) -> Status:
        tok = self.next()
        try:
            return Status.parse(tok.text)
        except ValueError:
            raise self.error(f"unknown status {tok.text!r}", tok) from None

    def effect(self) -> Effect:
        tok = self.tok
        if self.at("wealth") or self.at("debt"):
            self.next()
            op = self.next()
            if op.text not in ("+=", "-="):
                raise self.error("expected '+=' or '-='", op)
            amount = self.integer()
            amount = amount if op.text == "+=" else -amount
            return WealthDelta(amount) if tok.text == "wealth" else DebtDelta(amount)
        if self.at("status"):
            self.next()
            self.expect("=")
            lit_tok = self.tok
            status = self.status_literal()
            if status is Status.IMPRISONED:
                raise self.error("use 'prison' to imprison an agent", lit_tok)
            return SetStatus(status)
        if self.at("home"):
            self.next()
            self.expect("=")
            which = self.next()
            if which.text == "new":
                return GrantHome()
            if which.text == "none":
                return RevokeHome()
            raise self.error("expected 'new' or 'none'", which)
        if self.at("prison"):
            self.next()
            if self.tok.kind == "num":
                return SendToPrison(self.integer())
            return SendToPrison()
        if tok.kind == "ident" and tok.text not in ("norm",):
            raise self.error(f"unknown effect target {tok.text!r}", tok, UnknownAttribute)
        raise self.error(f"expected an effect, found {tok.text or 'end of input'!r}")


def parse_norms(source: str) -> NormSet:
    return _Parser(source).normset()


def load_norms(path: Union[str, Path]) -> NormSet:
    from .config import ConfigError, resolve_path

    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_norms(text)


# --- canonical text form ---------------------------------------------------

_PREC = {Or: 1, And: 2, Not: 3, Flag: 4, Compare: 4}


def format_expr(expr: Expr) -> str:
    def wrap(child: Expr, min_prec: int) -> str:
        text = format_expr(child)
        return f"({text})" if _PREC[type(child)] < min_prec else text

    if isinstance(expr, Flag):
        return expr.name
    if isinstance(expr, Compare):
        value = expr.value.label if isinstance(expr.value, Status) else repr(expr.value)
        return f"{expr.attr} {expr.op} {value}"
    if isinstance(expr, Not):
        return f"not {wrap(expr.operand, 3)}"
    word = "or" if isinstance(expr, Or) else "and"
    prec = _PREC[type(expr)]
    # left-associative: only the right operand needs parens at equal precedence
    return f"{wrap(expr.left, prec)} {word} {wrap(expr.right, prec + 1)}"


def format_effect(effect: Effect) -> str:
    if isinstance(effect, (WealthDelta, DebtDelta)):
        target = "wealth" if isinstance(effect, WealthDelta) else "debt"
        op = "+=" if effect.amount >= 0 else "-="
        return f"{target} {op} {abs(effect.amount)}"
    if isinstance(effect, SetStatus):
        return f"status = {effect.status.label}"
    if isinstance(effect, GrantHome):
        return "home = new"
    if isinstance(effect, RevokeHome):
        return "home = none"
    return "prison" if effect.days is None else f"prison {effect.days}"


def format_norm(norm: Norm) -> str:
    effects = "; ".join(format_effect(e) for e in norm.effects)
    return f"norm {norm.id} tag {norm.tag.value} when {format_expr(norm.precondition)} then {effects}"


def serialize(norms: NormSet) -> str:
    return "".join(format_norm(n) + "\n" for n in norms)


# --- evaluation ------------------------------------------------------------


def evaluate(expr: Expr, ctx: Mapping[str, Any]):
    """Evaluate against scalar or array-valued attributes (numpy broadcasting)."""
    if isinstance(expr, Flag):
        return ctx[expr.name]
    if isinstance(expr, Compare):
        value = int(expr.value) if isinstance(expr.value, Status) else expr.value
        return _CMP[expr.op](ctx[expr.attr], value)
    if isinstance(expr, Not):
        return np.logical_not(evaluate(expr.operand, ctx))
    if isinstance(expr, And):
        return np.logical_and(evaluate(expr.left, ctx), evaluate(expr.right, ctx))
    return np.logical_or(evaluate(expr.left, ctx), evaluate(expr.right, ctx))


def agent_context(agent: AgentState, clock: Clock) -> Dict[str, Any]:
    return {
        "status": int(agent.status),
        "wealth": agent.wealth,
        "debt": agent.debt,
        "age": agent.profile.age,
        "income": agent.profile.income,
        "rent": agent.profile.rent,
        "slept_street": agent.slept_street,
        "stole_food": agent.stole_food,
        "has_home": agent.has_home,
        "month_boundary": clock.month_boundary,
    }


def evaluate_precondition(norm: Norm, agent: AgentState, clock: Clock) -> bool:
    return bool(evaluate(norm.precondition, agent_context(agent, clock)))


LogEntry = Tuple[int, int, int]  # (step, agent id, norm id)


def _couple_home_status(status: Status, has_home: bool) -> Status:
    if status is Status.IMPRISONED:
        return status
    if not has_home and status is not Status.HOMELESS:
        return Status.HOMELESS
    if has_home and status is Status.HOMELESS:
        return Status.UNEMPLOYED
    return status


def apply_effect(
    agent: AgentState,
    effect: Effect,
    prison_days: int,
    new_home: Callable[[AgentState], int],
) -> None:
    if isinstance(effect, WealthDelta):
        agent.wealth += effect.amount
    elif isinstance(effect, DebtDelta):
        agent.debt = max(0, agent.debt + effect.amount)
    elif isinstance(effect, SetStatus):
        # a sentence in progress outranks any status change; release decides later
        if agent.status is not Status.IMPRISONED:
            agent.status = effect.status
    elif isinstance(effect, GrantHome):
        agent.profile.home_location = new_home(agent)
    elif isinstance(effect, RevokeHome):
        agent.profile.home_location = None
    elif isinstance(effect, SendToPrison):
        days = prison_days if effect.days is None else effect.days
        agent.status = Status.IMPRISONED
        agent.prison_steps_remaining = days * STEPS_PER_DAY


def apply_norms(
    norms: NormSet,
    agents: Sequence[AgentState],
    clock: Clock,
    prison_days: int = 5,
    new_home: Optional[Callable[[AgentState], int]] = None,
) -> Tuple[Sequence[AgentState], List[LogEntry]]:
    """Apply every triggered norm to every agent, in place.

    Preconditions are all evaluated on the agent's state before any effect of
    this pass lands; triggered effects then apply in ascending norm id.
    """
    pick_home = new_home or (lambda a: a.location)
    log: List[LogEntry] = []
    for agent in agents:
        ctx = agent_context(agent, clock)
        fired = [n for n in norms if bool(evaluate(n.precondition, ctx))]
        if not fired:
            continue
        for norm in fired:
            for effect in norm.effects:
                apply_effect(agent, effect, prison_days, pick_home)
            log.append((clock.step, agent.id, norm.id))
        agent.status = _couple_home_status(agent.status, agent.has_home)
    return agents, log


def arrays_context(pop: AgentArrays, clock: Clock, cache: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, Any]:
    ctx = {
        "status": pop.status,
        "wealth": pop.wealth,
        "debt": pop.debt,
        "slept_street": pop.slept_street,
        "stole_food": pop.stole_food,
        "has_home": pop.home >= 0,
        "month_boundary": clock.month_boundary,
    }
    for key in ("age", "income", "rent"):
        ctx[key] = cache[key] if cache and key in cache else getattr(pop, key)
    return ctx


def apply_norms_arrays(
    norms: NormSet,
    pop: AgentArrays,
    clock: Clock,
    prison_days: int = 5,
    new_home: Optional[Callable[[int], int]] = None,
    cache: Optional[Dict[str, np.ndarray]] = None,
) -> np.ndarray:
    """Column-wise :func:`apply_norms`; returns log rows ``(step, agent id, norm id)``.

    ``new_home`` receives the agent's row index.  Rows are ordered by agent,
    then norm id, matching the per-agent version.
    """
    if not len(norms) or not len(pop):
        return np.empty((0, 3), dtype=np.int64)
    ctx = arrays_context(pop, clock, cache)
    n = len(pop)
    fired = np.zeros((n, len(norms)), dtype=bool)
    for k, norm in enumerate(norms):
        fired[:, k] = np.broadcast_to(evaluate(norm.precondition, ctx), (n,))
    rows, cols = np.nonzero(fired)
    if rows.size == 0:
        return np.empty((0, 3), dtype=np.int64)

    touched = np.unique(rows)
    ids = pop.ids if cache is None or "ids" not in cache else cache["ids"]
    for k, norm in enumerate(norms):
        hit = np.nonzero(fired[:, k])[0]
        if hit.size == 0:
            continue
        for effect in norm.effects:
            if isinstance(effect, WealthDelta):
                pop.wealth[hit] += effect.amount
            elif isinstance(effect, DebtDelta):
                pop.debt[hit] = np.maximum(0, pop.debt[hit] + effect.amount)
            elif isinstance(effect, SetStatus):
                free = hit[pop.status[hit] != Status.IMPRISONED]
                pop.status[free] = int(effect.status)
            elif isinstance(effect, RevokeHome):
                pop.home[hit] = -1
            elif isinstance(effect, SendToPrison):
                days = prison_days if effect.days is None else effect.days
                pop.status[hit] = int(Status.IMPRISONED)
                pop.prison[hit] = days * STEPS_PER_DAY
            elif isinstance(effect, GrantHome):
                for i in hit:
                    pop.home[i] = new_home(int(i)) if new_home else pop.location[i]

    st = pop.status[touched]
    homed = pop.home[touched] >= 0
    free = st != Status.IMPRISONED
    st = np.where(free & ~homed & (st != Status.HOMELESS), int(Status.HOMELESS), st)
    st = np.where(free & homed & (st == Status.HOMELESS), int(Status.UNEMPLOYED), st)
    pop.status[touched] = st

    log = np.empty((rows.size, 3), dtype=np.int64)
    log[:, 0] = clock.step
    log[:, 1] = ids[rows]
    log[:, 2] = np.array(norms.ids, dtype=np.int64)[cols]
    return log
