"""Multiset relational-algebra expressions for view bodies, and their parser.

Grammar (one view per line, # comments allowed):

    NAME = expr
    expr   := term (JOIN term ON conj)*
    term   := rel [AS alias] | '(' expr ')'
            | SELECT conj '(' expr ')'
            | GROUPBY '(' cols ';' aggs ')' '(' expr ')'
    conj   := cmp (AND cmp)*
    cmp    := col ('=' | '<' | '<=' | '>' | '>=') (col | const)
    agg    := (count | sum | avg) '(' col ')'

Columns may be written bare or qualified (rel.col / alias.col).  `AS` binds a
second occurrence of a relation under a fresh name so self-joins stay
unambiguous.  Normalization pushes every selection down onto the scan it
filters and leaves joins free to commute and reassociate above them; an
aggregate may appear only as the root.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .catalog import Catalog
from .errors import (
    AggregateNotIncrementalError,
    TypeMismatchError,
    UnknownColumnError,
    UnknownRelationError,
    UnsupportedSelectionError,
    ValidationError,
    ViewSyntaxError,
)

COMPARE_OPS = ("=", "<", "<=", ">", ">=")
AGG_FUNCS = ("count", "sum", "avg")

ColRef = tuple[str, str]  # (leaf occurrence name, column name)


@dataclass(frozen=True)
class Comparison:
    """Filter atom: column op constant."""

    col: ColRef
    op: str
    value: Union[int, float, str]


@dataclass(frozen=True)
class JoinPred:
    """Equality between columns of two leaf occurrences, stored in sorted order."""

    left: ColRef
    right: ColRef

    @staticmethod
    def make(a: ColRef, b: ColRef) -> "JoinPred":
        return JoinPred(*sorted((a, b)))

    def __str__(self) -> str:
        return f"{self.left[0]}.{self.left[1]}={self.right[0]}.{self.right[1]}"


@dataclass(frozen=True)
class Scan:
    relation: str
    alias: str
    predicate: tuple[Comparison, ...] = ()


@dataclass(frozen=True)
class Select:
    predicate: tuple[Comparison, ...]
    input: "Expr"


@dataclass(frozen=True)
class Join:
    predicates: tuple[JoinPred, ...]
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Aggregate:
    group_cols: tuple[ColRef, ...]
    aggregates: tuple[tuple[str, ColRef], ...]  # declared (func, col) list
    input: "Expr"

    def sum_columns(self) -> tuple[ColRef, ...]:
        """Columns whose running sums the materialized result stores (sum and avg)."""
        out, seen = [], set()
        for func, col in self.aggregates:
            if func in ("sum", "avg") and col not in seen:
                seen.add(col)
                out.append(col)
        return tuple(out)


Expr = Union[Scan, Select, Join, Aggregate]


@dataclass(frozen=True)
class ViewDef:
    name: str
    body: Expr  # normalized


# --------------------------------------------------------------------------
# tokenizer / parser

_KEYWORDS = {"JOIN", "ON", "AND", "SELECT", "GROUPBY", "AS"}
_PUNCT = ("(", ")", ",", ";", "<=", ">=", "=", "<", ">", ".")


def _tokenize(line: str) -> list[str]:
    tokens, i = [], 0
    while i < len(line):
        ch = line[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "'":
            j = line.find("'", i + 1)
            if j < 0:
                raise ViewSyntaxError(f"unterminated string literal: {line[i:]}")
            tokens.append(line[i : j + 1])
            i = j + 1
            continue
        two = line[i : i + 2]
        if two in ("<=", ">="):
            tokens.append(two)
            i += 2
            continue
        if ch in "()=<>,;.":
            tokens.append(ch)
            i += 1
            continue
        j = i
        while j < len(line) and (line[j].isalnum() or line[j] in "_-"):
            j += 1
        if j == i:
            raise ViewSyntaxError(f"unexpected character {ch!r} in {line!r}")
        tokens.append(line[i:j])
        i = j
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], catalog: Catalog):
        self.tokens = tokens
        self.pos = 0
        self.catalog = catalog
        self.scans: dict[str, Scan] = {}  # alias -> scan, in appearance order

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ViewSyntaxError("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got.upper() != tok if tok in _KEYWORDS else got != tok:
            raise ViewSyntaxError(f"expected {tok!r}, got {got!r}")

    def at_keyword(self, kw: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.upper() == kw

    # ---- grammar rules

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.at_keyword("JOIN"):
            self.next()
            right = self.parse_term()
            self.expect("ON")
            preds = self.parse_join_conj(node, right)
            node = Join(tuple(preds), node, right)
        return node

    def parse_term(self) -> Expr:
        tok = self.peek()
        if tok == "(":
            self.next()
            node = self.parse_expr()
            self.expect(")")
            return node
        if tok is not None and tok.upper() == "SELECT":
            self.next()
            preds = self.parse_filter_conj_unresolved()
            self.expect("(")
            node = self.parse_expr()
            self.expect(")")
            return Select(tuple(self.resolve_filters(preds, node)), node)
        if tok is not None and tok.upper() == "GROUPBY":
            self.next()
            self.expect("(")
            group = self.parse_col_list()
            self.expect(";")
            aggs = self.parse_agg_list()
            self.expect(")")
            self.expect("(")
            node = self.parse_expr()
            self.expect(")")
            group = tuple(self.resolve_col(c, node) for c in group)
            aggs = tuple((f, self.resolve_col(c, node)) for f, c in aggs)
            return Aggregate(group, aggs, node)
        return self.parse_scan()

    def parse_scan(self) -> Scan:
        name = self.next()
        if name.upper() in _KEYWORDS or name in _PUNCT:
            raise ViewSyntaxError(f"expected relation name, got {name!r}")
        alias = name
        if self.at_keyword("AS"):
            self.next()
            alias = self.next()
        if name not in self.catalog:
            raise UnknownRelationError(f"unknown relation {name}")
        if alias in self.scans:
            raise ValidationError(
                f"{alias} appears twice; alias the second occurrence with AS"
            )
        scan = Scan(name, alias)
        self.scans[alias] = scan
        return scan

    def parse_col_list(self) -> list[tuple[str | None, str]]:
        cols = [self.parse_colref_raw()]
        while self.peek() == ",":
            self.next()
            cols.append(self.parse_colref_raw())
        return cols

    def parse_agg_list(self) -> list[tuple[str, tuple[str | None, str]]]:
        aggs = [self.parse_agg()]
        while self.peek() == ",":
            self.next()
            aggs.append(self.parse_agg())
        return aggs

    def parse_agg(self) -> tuple[str, tuple[str | None, str]]:
        func = self.next().lower()
        if func in ("min", "max"):
            raise AggregateNotIncrementalError(
                f"{func} cannot be maintained incrementally under deletes"
            )
        if func not in AGG_FUNCS:
            raise ViewSyntaxError(f"unknown aggregate function {func!r}")
        self.expect("(")
        col = self.parse_colref_raw()
        self.expect(")")
        return func, col

    def parse_colref_raw(self) -> tuple[str | None, str]:
        first = self.next()
        if self.peek() == ".":
            self.next()
            return first, self.next()
        return None, first

    def parse_filter_conj_unresolved(self) -> list[tuple]:
        atoms = [self.parse_cmp_raw()]
        while self.at_keyword("AND"):
            self.next()
            atoms.append(self.parse_cmp_raw())
        return atoms

    def parse_cmp_raw(self) -> tuple:
        left = self.parse_colref_raw()
        op = self.next()
        if op not in COMPARE_OPS:
            raise ViewSyntaxError(f"expected comparison operator, got {op!r}")
        tok = self.peek()
        if tok is not None and (tok[0].isdigit() or tok[0] == "-" or tok[0] == "'"):
            return left, op, self.parse_const()
        right = self.parse_colref_raw()
        return left, op, right

    def parse_const(self) -> Union[int, float, str]:
        tok = self.next()
        if tok.startswith("'"):
            return tok[1:-1]
        if self.peek() == ".":
            self.next()
            frac = self.next()
            return float(f"{tok}.{frac}")
        try:
            return int(tok)
        except ValueError as exc:
            raise ViewSyntaxError(f"bad constant {tok!r}") from exc

    def parse_join_conj(self, left: Expr, right: Expr) -> list[JoinPred]:
        atoms = self.parse_filter_conj_unresolved()
        left_scope = scope_of(left)
        right_scope = scope_of(right)
        preds = []
        for a, op, b in atoms:
            if not isinstance(b, tuple):
                raise ViewSyntaxError("ON clause must equate columns, not constants")
            if op != "=":
                raise ViewSyntaxError("join predicates must be equalities")
            ca = self._resolve_in(a, {**left_scope, **right_scope})
            cb = self._resolve_in(b, {**left_scope, **right_scope})
            in_left = ca[0] in left_scope
            cb_in_left = cb[0] in left_scope
            if in_left == cb_in_left:
                raise ValidationError(f"join predicate {ca}={cb} does not span both inputs")
            self._check_types(ca, cb)
            preds.append(JoinPred.make(ca, cb))
        return preds

    def resolve_filters(self, atoms: list[tuple], node: Expr) -> list[Comparison]:
        scope = scope_of(node)
        out = []
        for a, op, b in atoms:
            if isinstance(b, tuple):
                raise ViewSyntaxError("SELECT predicates must compare against constants")
            col = self._resolve_in(a, scope)
            self._check_const_type(col, b)
            out.append(Comparison(col, op, b))
        return out

    def resolve_col(self, raw: tuple[str | None, str], node: Expr) -> ColRef:
        return self._resolve_in(raw, scope_of(node))

    def _resolve_in(self, raw: tuple[str | None, str], scope: dict[str, Scan]) -> ColRef:
        qual, col = raw
        if qual is not None:
            if qual not in scope:
                raise UnknownColumnError(f"{qual}.{col}: {qual} not in scope")
            if col not in self.catalog[scope[qual].relation].column_names():
                raise UnknownColumnError(f"{qual}.{col}: no such column")
            return (qual, col)
        owners = [
            alias
            for alias, scan in scope.items()
            if col in self.catalog[scan.relation].column_names()
        ]
        if not owners:
            raise UnknownColumnError(f"column {col} not found in scope")
        if len(owners) > 1:
            raise UnknownColumnError(f"column {col} is ambiguous ({', '.join(sorted(owners))})")
        return (owners[0], col)

    def _col_type(self, col: ColRef) -> str:
        rel = self.scans[col[0]].relation
        return self.catalog[rel].column_type(col[1])

    def _check_types(self, a: ColRef, b: ColRef) -> None:
        if self._col_type(a) != self._col_type(b):
            raise TypeMismatchError(f"cannot compare {a} ({self._col_type(a)}) with {b}")

    def _check_const_type(self, col: ColRef, value) -> None:
        typ = self._col_type(col)
        if typ == "string" and not isinstance(value, str):
            raise TypeMismatchError(f"{col} is a string column, got {value!r}")
        if typ in ("int", "decimal") and isinstance(value, str):
            raise TypeMismatchError(f"{col} is numeric, got string {value!r}")


def scope_of(expr: Expr) -> dict[str, Scan]:
    """Leaf occurrences visible from an expression, keyed by alias."""
    if isinstance(expr, Scan):
        return {expr.alias: expr}
    if isinstance(expr, (Select, Aggregate)):
        return scope_of(expr.input)
    out = scope_of(expr.left)
    out.update(scope_of(expr.right))
    return out


def parse_view(source: str, catalog: Catalog) -> ViewDef:
    """Parse and normalize a single `NAME = expr` definition."""
    if "=" not in source:
        raise ViewSyntaxError(f"expected NAME = expr, got {source!r}")
    name, _, body = source.partition("=")
    name = name.strip()
    if not name or not name.replace("_", "").isalnum():
        raise ViewSyntaxError(f"bad view name {name!r}")
    parser = _Parser(_tokenize(body), catalog)
    expr = parser.parse_expr()
    if parser.peek() is not None:
        raise ViewSyntaxError(f"trailing input after expression: {parser.peek()!r}")
    return ViewDef(name, normalize(expr))


def parse_views(text: str, catalog: Catalog) -> list[ViewDef]:
    views, names = [], set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        view = parse_view(line, catalog)
        if view.name in names:
            raise ValidationError(f"duplicate view name {view.name}")
        names.add(view.name)
        views.append(view)
    return views


# --------------------------------------------------------------------------
# normalization

def normalize(expr: Expr) -> Expr:
    """Push selections onto their scans; keep at most one aggregate, at the root.

    Idempotent: the normal form is a join tree over predicated scans with an
    optional Aggregate root.
    """
    return _push(expr, [])


def _push(expr: Expr, pending: list[Comparison]) -> Expr:
    if isinstance(expr, Select):
        return _push(expr.input, pending + list(expr.predicate))
    if isinstance(expr, Scan):
        mine = tuple(sorted(pending + list(expr.predicate), key=_cmp_key))
        return Scan(expr.relation, expr.alias, mine)
    if isinstance(expr, Join):
        left_scope = set(scope_of(expr.left))
        left_preds = [c for c in pending if c.col[0] in left_scope]
        right_preds = [c for c in pending if c.col[0] not in left_scope]
        return Join(
            tuple(sorted(expr.predicates, key=_pred_key)),
            _push(expr.left, left_preds),
            _push(expr.right, right_preds),
        )
    if isinstance(expr, Aggregate):
        if _contains_aggregate(expr.input):
            raise ValidationError("nested aggregates are not supported")
        group = set(expr.group_cols)
        blocked = [c for c in pending if c.col not in group]
        if blocked:
            raise UnsupportedSelectionError(
                f"selection on aggregate output is not supported: {blocked[0].col}"
            )
        return Aggregate(expr.group_cols, expr.aggregates, _push(expr.input, pending))
    raise TypeError(f"unexpected node {expr!r}")


def _contains_aggregate(expr: Expr) -> bool:
    if isinstance(expr, Aggregate):
        return True
    if isinstance(expr, Scan):
        return False
    if isinstance(expr, Select):
        return _contains_aggregate(expr.input)
    return _contains_aggregate(expr.left) or _contains_aggregate(expr.right)


def _cmp_key(c: Comparison):
    return (c.col, c.op, repr(c.value))


def _pred_key(p: JoinPred):
    return (p.left, p.right)


# --------------------------------------------------------------------------
# schemas

COUNT_COLUMN = "__count"


def schema_of(expr: Expr, catalog: Catalog) -> tuple[str, ...]:
    """Deterministic output schema of an expression.

    Scans expose qualified names (alias.col); joins concatenate left then
    right.  Aggregates emit group columns (bare names), one running-sum column
    per summed input column, and the hidden group count used to merge deletes.
    """
    if isinstance(expr, Scan):
        return tuple(f"{expr.alias}.{c}" for c in catalog[expr.relation].column_names())
    if isinstance(expr, Select):
        return schema_of(expr.input, catalog)
    if isinstance(expr, Join):
        return schema_of(expr.left, catalog) + schema_of(expr.right, catalog)
    if isinstance(expr, Aggregate):
        cols = [c for _, c in expr.group_cols]
        cols += [f"sum_{c}" for _, c in expr.sum_columns()]
        cols.append(COUNT_COLUMN)
        return tuple(cols)
    raise TypeError(f"unexpected node {expr!r}")


def leaf_scans(expr: Expr) -> list[Scan]:
    """Scans of a normalized expression, in syntactic order."""
    if isinstance(expr, Scan):
        return [expr]
    if isinstance(expr, (Select, Aggregate)):
        return leaf_scans(expr.input)
    return leaf_scans(expr.left) + leaf_scans(expr.right)
