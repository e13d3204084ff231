"""Line-oriented parser and printer for rule programs and data records.

Program syntax, one statement per line, `//` comments:

    pred word/1
    pred ans/1 open
    2.0: ans(Z) <- word(Z)
    0.5: a(X) | !b(X) <- c(X) & !d(X) & sim(X, "standing near")
    1.0: h(a) <- true
    sum ans/1 <= 1.0
    option solver_tolerance 1e-4

Data files are line-delimited JSON records:

    {"pred": "word", "args": ["barn"], "value": 1.0}
    {"pred": "ans", "args": ["barn"], "target": true}
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .logic import (
    Atom,
    Database,
    Literal,
    LogicError,
    PredicateDecl,
    Rule,
    SummationConstraint,
    Term,
    format_weight,
)


class ParseError(ValueError):
    """Syntax or validation error with source position."""

    def __init__(self, message: str, line: int, col: int = 0):
        super().__init__(f"line {line}, column {col}: {message}" if col else f"line {line}: {message}")
        self.line = line
        self.col = col


@dataclass
class Program:
    """A parsed rule program: declarations, weighted rules, constraints."""

    declarations: list[PredicateDecl] = field(default_factory=list)
    rules: list[Rule] = field(default_factory=list)
    constraints: list[SummationConstraint] = field(default_factory=list)
    options: dict[str, str] = field(default_factory=dict)
    # Source positions of rule weight tokens, for weight rewriting:
    # list of (line_index, start_col, end_col), parallel to `rules`.
    weight_spans: list = field(default_factory=list, compare=False)
    source_lines: list = field(default_factory=list, compare=False)

    def decl_map(self) -> dict[str, PredicateDecl]:
        return {d.name: d for d in self.declarations}


_IDENT = re.compile(r"[^\s(),:|&!/\"<>=]+")

_TOKEN = re.compile(
    r"""\s*(?:
      (?P<comment>//.*) |
      (?P<arrow><-) | (?P<le><=) |
      (?P<punct>[(),:|&!/]) |
      (?P<string>"(?:[^"\\]|\\.)*") |
      (?P<word>[^\s(),:|&!/"<>=]+)
    )""",
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None or m.end() == pos:
            if line[pos:].strip():
                raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
            break
        pos = m.end()
        kind = m.lastgroup
        if kind == "comment":
            break
        text = m.group(kind)
        col = m.start(kind) + 1
        if kind == "punct":
            kind = text
        toks.append(_Tok(kind, text, col))
    return toks


class _LineParser:
    def __init__(self, toks: list[_Tok], lineno: int):
        self.toks = toks
        self.lineno = lineno
        self.i = 0

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, kind: Optional[str] = None, what: str = "") -> _Tok:
        tok = self.peek()
        if tok is None:
            col = self.toks[-1].col + len(self.toks[-1].text) if self.toks else 1
            raise ParseError(f"expected {what or kind}, found end of line", self.lineno, col)
        if kind is not None and tok.kind != kind:
            raise ParseError(
                f"expected {what or kind}, found {tok.text!r}", self.lineno, tok.col
            )
        self.i += 1
        return tok

    def done(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected trailing {tok.text!r}", self.lineno, tok.col)

    # -- grammar pieces ----------------------------------------------------

    def term(self) -> Term:
        tok = self.peek()
        if tok is None:
            raise ParseError("expected a term, found end of line", self.lineno, 1)
        if tok.kind == "string":
            self.i += 1
            raw = tok.text[1:-1].replace('\\"', '"').replace("\\\\", "\\")
            if not raw:
                raise ParseError("empty quoted constant", self.lineno, tok.col)
            if raw[0].isupper():
                raise ParseError(
                    f"quoted constant {raw!r} must not begin uppercase", self.lineno, tok.col
                )
            return Term(raw)
        if tok.kind == "word":
            self.i += 1
            return Term(tok.text)
        raise ParseError(f"expected a term, found {tok.text!r}", self.lineno, tok.col)

    def atom(self) -> Atom:
        name = self.next("word", "a predicate name")
        self.next("(", "'('")
        args = [self.term()]
        while self.peek() is not None and self.peek().kind == ",":
            self.i += 1
            args.append(self.term())
        self.next(")", "')'")
        return Atom(name.text, tuple(args))

    def literal(self) -> Literal:
        negated = False
        if self.peek() is not None and self.peek().kind == "!":
            self.i += 1
            negated = True
        return Literal(self.atom(), negated)


def parse_program(text: str) -> Program:
    """Parse a rule file. Raises ParseError with line/column positions."""
    prog = Program()
    prog.source_lines = text.splitlines()
    for lineno, line in enumerate(prog.source_lines, start=1):
        toks = _tokenize(line, lineno)
        if not toks:
            continue
        head = toks[0]
        if head.kind == "word" and head.text == "pred":
            _parse_decl(_LineParser(toks[1:], lineno), prog)
        elif head.kind == "word" and head.text == "sum":
            _parse_constraint(_LineParser(toks[1:], lineno), prog)
        elif head.kind == "word" and head.text == "option":
            _parse_option(_LineParser(toks[1:], lineno), prog)
        else:
            _parse_rule(_LineParser(toks, lineno), prog, lineno)
    _validate_predicates(prog)
    return prog


def _parse_decl(p: _LineParser, prog: Program) -> None:
    name = p.next("word", "a predicate name").text
    p.next("/", "'/'")
    arity_tok = p.next("word", "an arity")
    try:
        arity = int(arity_tok.text)
    except ValueError:
        raise ParseError(f"arity must be an integer, got {arity_tok.text!r}", p.lineno, arity_tok.col)
    is_open = False
    nxt = p.peek()
    if nxt is not None and nxt.kind == "word" and nxt.text == "open":
        p.i += 1
        is_open = True
    p.done()
    try:
        prog.declarations.append(PredicateDecl(name, arity, is_open))
    except LogicError as e:
        raise ParseError(str(e), p.lineno) from None


def _parse_constraint(p: _LineParser, prog: Program) -> None:
    name = p.next("word", "a predicate name").text
    p.next("/", "'/'")
    arity_tok = p.next("word", "an arity")
    p.next("le", "'<='")
    bound_tok = p.next("word", "a bound")
    p.done()
    try:
        arity = int(arity_tok.text)
    except ValueError:
        raise ParseError(f"arity must be an integer, got {arity_tok.text!r}", p.lineno, arity_tok.col)
    try:
        bound = float(bound_tok.text)
    except ValueError:
        raise ParseError(f"bound must be a number, got {bound_tok.text!r}", p.lineno, bound_tok.col)
    try:
        constraint = SummationConstraint(name, arity, bound)
    except LogicError as e:
        raise ParseError(str(e), p.lineno, bound_tok.col) from None
    prog.constraints.append(constraint)


def _parse_option(p: _LineParser, prog: Program) -> None:
    key = p.next("word", "an option name").text
    val = p.next(None, "an option value").text
    p.done()
    prog.options[key] = val


def _parse_rule(p: _LineParser, prog: Program, lineno: int) -> None:
    wtok = p.next("word", "a rule weight")
    try:
        weight = float(wtok.text)
    except ValueError:
        raise ParseError(f"expected a rule weight, found {wtok.text!r}", lineno, wtok.col)
    if not math.isfinite(weight):
        raise ParseError(f"rule weight must be finite, got {wtok.text}", lineno, wtok.col)
    if weight < 0:
        raise ParseError(f"rule weight must be >= 0, got {wtok.text}", lineno, wtok.col)
    p.next(":", "':'")
    head = [p.literal()]
    while p.peek() is not None and p.peek().kind == "|":
        p.i += 1
        head.append(p.literal())
    p.next("arrow", "'<-'")
    nxt = p.peek()
    body: list[Literal] = []
    if nxt is not None and nxt.kind == "word" and nxt.text == "true":
        p.i += 1
    else:
        body.append(p.literal())
        while p.peek() is not None and p.peek().kind == "&":
            p.i += 1
            body.append(p.literal())
    p.done()
    try:
        rule = Rule(tuple(head), tuple(body), weight)
    except LogicError as e:
        raise ParseError(str(e), lineno) from None
    prog.rules.append(rule)
    prog.weight_spans.append((lineno - 1, wtok.col - 1, wtok.col - 1 + len(wtok.text)))


def _validate_predicates(prog: Program) -> None:
    decls = prog.decl_map()
    seen = set()
    for d in prog.declarations:
        if d.name in seen:
            raise ParseError(f"predicate {d.name} declared twice", 1)
        seen.add(d.name)
    for ridx, rule in enumerate(prog.rules):
        for lit in rule.head + rule.body:
            d = decls.get(lit.atom.pred)
            if d is None:
                raise ParseError(
                    f"unknown predicate {lit.atom.pred} in rule {ridx + 1}",
                    _rule_line(prog, ridx),
                )
            if d.arity != lit.atom.arity:
                raise ParseError(
                    f"{lit.atom} has arity {lit.atom.arity}, declared {d.name}/{d.arity}",
                    _rule_line(prog, ridx),
                )
    for c in prog.constraints:
        d = decls.get(c.pred)
        if d is None:
            raise ParseError(f"unknown predicate {c.pred} in sum constraint", 1)
        if not d.is_open:
            raise ParseError(f"sum constraint needs an open predicate, {c.pred} is closed", 1)


def _rule_line(prog: Program, ridx: int) -> int:
    if ridx < len(prog.weight_spans):
        return prog.weight_spans[ridx][0] + 1
    return 1


# -- printing ---------------------------------------------------------------

_PLAIN = re.compile(r"[^\sA-Z(),:|&!/\"<>=][^\s(),:|&!/\"<>=]*$")


def format_term(t: Term) -> str:
    if t.is_variable or _PLAIN.match(t.name):
        return t.name
    return '"%s"' % t.name.replace("\\", "\\\\").replace('"', '\\"')


def format_atom(a: Atom) -> str:
    return "%s(%s)" % (a.pred, ", ".join(format_term(t) for t in a.args))


def format_literal(l: Literal) -> str:
    return ("!" if l.negated else "") + format_atom(l.atom)


def format_rule(r: Rule) -> str:
    head = " | ".join(format_literal(l) for l in r.head)
    body = " & ".join(format_literal(l) for l in r.body) if r.body else "true"
    return f"{format_weight(r.weight)}: {head} <- {body}"


def format_program(prog: Program) -> str:
    """Render a program so that parse_program(format_program(p)) == p."""
    lines = []
    for d in prog.declarations:
        lines.append(f"pred {d.name}/{d.arity}" + (" open" if d.is_open else ""))
    for r in prog.rules:
        lines.append(format_rule(r))
    for c in prog.constraints:
        lines.append(f"sum {c.pred}/{c.arity} <= {repr(float(c.bound))}")
    for k, v in prog.options.items():
        lines.append(f"option {k} {v}")
    return "\n".join(lines) + "\n"


def rewrite_weights(prog: Program, weights: Iterable[float]) -> str:
    """Reproduce the original source text with each rule weight replaced.

    Requires the program to have been produced by parse_program (source
    positions recorded). Everything except the weight literals is kept
    byte-identical.
    """
    weights = list(weights)
    if len(weights) != len(prog.rules):
        raise ValueError(
            f"got {len(weights)} weights for {len(prog.rules)} rules"
        )
    lines = list(prog.source_lines)
    for (line_idx, start, end), w in zip(prog.weight_spans, weights):
        line = lines[line_idx]
        lines[line_idx] = line[:start] + format_weight(w) + line[end:]
    return "\n".join(lines) + ("\n" if lines else "")


# -- data records -------------------------------------------------------------

_RECORD_KEYS = {"pred", "args", "value", "target"}


def parse_data(lines: Iterable[str], db: Database) -> int:
    """Load line-delimited JSON atom records into a database.

    Returns the number of records loaded. Malformed records raise ParseError
    naming the 1-based record index. Constant arguments are normalized to
    lowercase (constants must not begin uppercase).
    """
    count = 0
    for idx, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"record {idx}: invalid JSON ({e.msg})", idx) from None
        if not isinstance(rec, dict):
            raise ParseError(f"record {idx}: expected a JSON object", idx)
        extra = set(rec) - _RECORD_KEYS
        if extra:
            raise ParseError(f"record {idx}: unknown fields {sorted(extra)}", idx)
        if "pred" not in rec or "args" not in rec:
            raise ParseError(f"record {idx}: 'pred' and 'args' are required", idx)
        pred = rec["pred"]
        args = rec["args"]
        if not isinstance(pred, str) or not isinstance(args, list) or not args:
            raise ParseError(f"record {idx}: bad 'pred' or 'args'", idx)
        if not all(isinstance(a, str) and a for a in args):
            raise ParseError(f"record {idx}: args must be non-empty strings", idx)
        target = rec.get("target", False)
        if not isinstance(target, bool):
            raise ParseError(f"record {idx}: 'target' must be a boolean", idx)
        value = rec.get("value")
        if value is not None and not isinstance(value, (int, float)):
            raise ParseError(f"record {idx}: 'value' must be a number", idx)
        try:
            a = Atom(pred, tuple(Term(s.lower()) for s in args))
            db.add(a, value=value, target=target)
        except LogicError as e:
            raise ParseError(f"record {idx}: {e}", idx) from None
        count += 1
    return count


def format_record(pred: str, args: Iterable[str], value: Optional[float] = None,
                  target: bool = False) -> str:
    """One stable JSON line per atom; floats at 6 decimal places."""
    parts = [f'"pred": {json.dumps(pred)}',
             f'"args": {json.dumps(list(args))}']
    if value is not None:
        parts.append(f'"value": {value:.6f}')
    if target:
        parts.append('"target": true')
    return "{" + ", ".join(parts) + "}"
