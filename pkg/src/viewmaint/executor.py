"""Desk-scale multiset interpreter: the correctness and optimality oracle.

Evaluates view bodies and chosen plans on concrete tiny databases, replays a
batch of updates one relation and one kind at a time while merging each
maintained result's differentials into its stored copy, and exhaustively
enumerates plan alternatives to cross-check the optimizer's minima.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass, field

from .algebra import Aggregate, Comparison, Expr, Join, Scan, Select
from .catalog import Catalog, DELETE, INSERT, delta_cardinality
from .errors import (
    NullDifferentialError,
    PlanInconsistentError,
    SchemaMismatchError,
    TooLargeError,
)
from .memo import AGG, AGG_OP, JOIN_OP, LEAF, Memo, SCAN_OP
from .optimizer import (
    ComputeOp,
    DeltaAgg,
    DeltaJoin,
    DeltaLeaf,
    DeltaPlan,
    EmptyDelta,
    FullPlan,
    Optimizer,
    ResultId,
    ReuseDelta,
    ReuseFull,
)

Row = tuple


@dataclass
class MultisetTable:
    schema: tuple[str, ...]
    rows: list[Row] = field(default_factory=list)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.schema):
                raise SchemaMismatchError(
                    f"row arity {len(row)} != schema arity {len(self.schema)}"
                )

    def counter(self) -> Counter:
        return Counter(self.rows)

    def same_rows(self, other: "MultisetTable") -> bool:
        """Multiset equality after aligning column order by name."""
        if sorted(self.schema) != sorted(other.schema):
            return False
        perm = [other.schema.index(c) for c in self.schema]
        theirs = Counter(tuple(row[i] for i in perm) for row in other.rows)
        return self.counter() == theirs

    def project(self, columns: tuple[str, ...]) -> "MultisetTable":
        idx = [self.schema.index(c) for c in columns]
        return MultisetTable(columns, [tuple(r[i] for i in idx) for r in self.rows])


@dataclass
class DeltaPair:
    plus: MultisetTable
    minus: MultisetTable


def bag_union(a: MultisetTable, b: MultisetTable) -> MultisetTable:
    if a.schema != b.schema:
        b = b.project(a.schema)
    return MultisetTable(a.schema, a.rows + b.rows)


def bag_monus(a: MultisetTable, b: MultisetTable) -> MultisetTable:
    """Multiset difference with multiplicities floored at zero."""
    if a.schema != b.schema:
        b = b.project(a.schema)
    counts = Counter(a.rows)
    counts.subtract(b.rows)
    rows = []
    for row, k in counts.items():
        rows.extend([row] * k)  # k <= 0 contributes nothing
    return MultisetTable(a.schema, rows)


def _filter(table: MultisetTable, predicates: tuple[Comparison, ...]) -> MultisetTable:
    if not predicates:
        return table
    tests = []
    for cmpr in predicates:
        name = f"{cmpr.col[0]}.{cmpr.col[1]}"
        if name not in table.schema:
            raise SchemaMismatchError(f"column {name} not in {table.schema}")
        i = table.schema.index(name)
        tests.append((i, cmpr.op, cmpr.value))

    def keep(row: Row) -> bool:
        for i, op, v in tests:
            x = row[i]
            if op == "=" and not x == v:
                return False
            if op == "<" and not x < v:
                return False
            if op == "<=" and not x <= v:
                return False
            if op == ">" and not x > v:
                return False
            if op == ">=" and not x >= v:
                return False
        return True

    return MultisetTable(table.schema, [r for r in table.rows if keep(r)])


def _qualify(table: MultisetTable, alias: str) -> MultisetTable:
    return MultisetTable(tuple(f"{alias}.{c}" for c in table.schema), list(table.rows))


def hash_join(left: MultisetTable, right: MultisetTable, preds,
              out_schema: tuple[str, ...] | None = None) -> MultisetTable:
    lkeys, rkeys = [], []
    for p in preds:
        a = f"{p.left[0]}.{p.left[1]}"
        b = f"{p.right[0]}.{p.right[1]}"
        if a in left.schema and b in right.schema:
            lkeys.append(left.schema.index(a))
            rkeys.append(right.schema.index(b))
        elif b in left.schema and a in right.schema:
            lkeys.append(left.schema.index(b))
            rkeys.append(right.schema.index(a))
        else:
            raise SchemaMismatchError(f"predicate {p} does not span the join inputs")
    build: dict[tuple, list[Row]] = {}
    for row in right.rows:
        build.setdefault(tuple(row[i] for i in rkeys), []).append(row)
    combined_schema = left.schema + right.schema
    rows = []
    for row in left.rows:
        for match in build.get(tuple(row[i] for i in lkeys), ()):
            rows.append(row + match)
    out = MultisetTable(combined_schema, rows)
    if out_schema is not None and out_schema != combined_schema:
        out = out.project(out_schema)
    return out


def group_rows(table: MultisetTable, group_cols: list[str], sum_cols: list[str],
               out_schema: tuple[str, ...]) -> MultisetTable:
    gidx = [table.schema.index(c) for c in group_cols]
    sidx = [table.schema.index(c) for c in sum_cols]
    acc: dict[tuple, list] = {}
    for row in table.rows:
        key = tuple(row[i] for i in gidx)
        slot = acc.get(key)
        if slot is None:
            acc[key] = [list(row[i] for i in sidx), 1]
        else:
            for j, i in enumerate(sidx):
                slot[0][j] += row[i]
            slot[1] += 1
    rows = [key + tuple(sums) + (count,) for key, (sums, count) in acc.items()]
    return MultisetTable(out_schema, rows)


# ----------------------------------------------------------------------------
# expression evaluation (reference semantics)

def eval_expr(expr: Expr, db: dict[str, MultisetTable]) -> MultisetTable:
    """Evaluate a view body directly against base tables.

    Output columns are alias-qualified; aggregates emit group columns, one
    sum(...) column per summed input column, and the hidden group count.
    """
    if isinstance(expr, Scan):
        if expr.relation not in db:
            raise SchemaMismatchError(f"relation {expr.relation} missing from database")
        return _filter(_qualify(db[expr.relation], expr.alias), expr.predicate)
    if isinstance(expr, Select):
        return _filter(eval_expr(expr.input, db), expr.predicate)
    if isinstance(expr, Join):
        return hash_join(eval_expr(expr.left, db), eval_expr(expr.right, db),
                         expr.predicates)
    if isinstance(expr, Aggregate):
        src = eval_expr(expr.input, db)
        group = [f"{a}.{c}" for a, c in expr.group_cols]
        sums = [f"{a}.{c}" for a, c in expr.sum_columns()]
        schema = tuple(group) + tuple(f"sum({c})" for c in sums) + ("__count",)
        return group_rows(src, group, sums, schema)
    raise TypeError(f"cannot evaluate {expr!r}")


def merge_into(current: MultisetTable, delta: MultisetTable, kind: str,
               is_aggregate: bool, n_group: int = 0) -> MultisetTable:
    """Apply one differential to a stored result.

    Joins merge by bag union / monus.  Aggregates merge groupwise: sums and
    counts are added for inserts and subtracted for deletes, and a group
    disappears when its count reaches zero.
    """
    if not is_aggregate:
        if kind == INSERT:
            return bag_union(current, delta)
        return bag_monus(current, delta)
    if delta.schema != current.schema:
        delta = delta.project(current.schema)
    sign = 1 if kind == INSERT else -1
    acc: dict[tuple, list] = {}
    order: list[tuple] = []
    for row in current.rows:
        key = row[:n_group]
        acc[key] = list(row[n_group:])
        order.append(key)
    for row in delta.rows:
        key = row[:n_group]
        vals = row[n_group:]
        slot = acc.get(key)
        if slot is None:
            acc[key] = [sign * v for v in vals]
            order.append(key)
        else:
            for j, v in enumerate(vals):
                slot[j] += sign * v
    rows = []
    for key in order:
        vals = acc.get(key)
        if vals is None:
            continue
        if vals[-1] <= 0:  # __count is last
            del acc[key]
            continue
        rows.append(key + tuple(vals))
        del acc[key]
    return MultisetTable(current.schema, rows)


# ----------------------------------------------------------------------------
# plan evaluation

class _EvalContext:
    def __init__(self, memo: Memo, db: dict[str, MultisetTable],
                 stored: dict[int, MultisetTable],
                 deltas: dict[str, DeltaPair], mat_deltas: set[tuple[int, int]],
                 delta_plans: dict[tuple[int, int], DeltaPlan]):
        self.memo = memo
        self.db = db
        self.stored = stored
        self.deltas = deltas
        self.mat_deltas = mat_deltas
        self.delta_plans = delta_plans
        self.delta_cache: dict[tuple[int, int], MultisetTable] = {}

    def leaf_delta(self, nid: int, index: int) -> MultisetTable:
        node = self.memo.node(nid)
        kind = self.memo.spec.kind_at(index)
        pair = self.deltas.get(node.relation)
        raw = (pair.plus if kind == INSERT else pair.minus) if pair else None
        if raw is None:
            raw = MultisetTable(tuple(self.memo.catalog[node.relation].column_names()))
        return _filter(_qualify(raw, node.alias), node.filters)


def eval_full_plan(plan: FullPlan, ctx: _EvalContext) -> MultisetTable:
    if isinstance(plan, ReuseFull):
        table = ctx.stored.get(plan.node)
        if table is None:
            raise PlanInconsistentError(f"full result {plan.node} is not materialized")
        return table
    op = ctx.memo.op(plan.op)
    node = ctx.memo.node(op.output)
    if op.kind == SCAN_OP:
        if node.relation not in ctx.db:
            raise SchemaMismatchError(f"relation {node.relation} missing from database")
        return _filter(_qualify(ctx.db[node.relation], node.alias), node.filters)
    if op.kind == JOIN_OP:
        left = eval_full_plan(plan.children[0], ctx)
        right = eval_full_plan(plan.children[1], ctx)
        return hash_join(left, right, op.preds, node.schema)
    src = eval_full_plan(plan.children[0], ctx)
    group = [f"{a}.{c}" for a, c in node.agg.group_cols]
    sums = [f"{a}.{c}" for a, c in node.agg.sum_cols]
    return group_rows(src, group, sums, node.schema)


def eval_delta_plan(plan: DeltaPlan, ctx: _EvalContext) -> MultisetTable:
    node = ctx.memo.node(plan.node if hasattr(plan, "node") else ctx.memo.op(plan.op).output)
    if isinstance(plan, EmptyDelta):
        return MultisetTable(node.schema)
    if isinstance(plan, ReuseDelta):
        key = (plan.node, plan.index)
        if key not in ctx.mat_deltas:
            raise PlanInconsistentError(f"differential {key} is not materialized")
        cached = ctx.delta_cache.get(key)
        if cached is None:
            book_plan = ctx.delta_plans.get(key)
            if book_plan is None:
                raise PlanInconsistentError(f"no plan recorded for materialized {key}")
            cached = eval_delta_plan(book_plan, ctx)
            ctx.delta_cache[key] = cached
        return cached
    key = (node.id, plan.index)
    cached = ctx.delta_cache.get(key)
    if cached is not None:
        return cached
    if isinstance(plan, DeltaLeaf):
        table = ctx.leaf_delta(plan.node, plan.index)
    elif isinstance(plan, DeltaAgg):
        src = eval_delta_plan(plan.input, ctx)
        group = [f"{a}.{c}" for a, c in node.agg.group_cols]
        sums = [f"{a}.{c}" for a, c in node.agg.sum_cols]
        table = group_rows(src, group, sums, node.schema)
    else:
        kind = ctx.memo.spec.kind_at(plan.index)
        parts = []
        for term in plan.terms:
            dtab = eval_delta_plan(term.delta, ctx)
            ftab = eval_full_plan(term.full, ctx)
            if term.updated:
                upd = eval_delta_plan(term.update_delta, ctx)
                ftab = merge_into(ftab, upd, kind, is_aggregate=False)
            op = ctx.memo.op(plan.op)
            parts.append(hash_join(dtab, ftab, op.preds, node.schema))
        table = parts[0]
        for extra in parts[1:]:
            table = bag_union(table, extra)
    ctx.delta_cache[key] = table
    return table


# ----------------------------------------------------------------------------
# direct differential evaluation (plan-free oracle)

def eval_node_full(memo: Memo, nid: int, db: dict[str, MultisetTable]) -> MultisetTable:
    """Evaluate a node's full result from base tables via its first operation."""
    node = memo.node(nid)
    if node.kind == LEAF:
        return _filter(_qualify(db[node.relation], node.alias), node.filters)
    op = memo.op(node.ops[0])
    if op.kind == JOIN_OP:
        left = eval_node_full(memo, op.inputs[0], db)
        right = eval_node_full(memo, op.inputs[1], db)
        return hash_join(left, right, op.preds, node.schema)
    src = eval_node_full(memo, op.inputs[0], db)
    group = [f"{a}.{c}" for a, c in node.agg.group_cols]
    sums = [f"{a}.{c}" for a, c in node.agg.sum_cols]
    return group_rows(src, group, sums, node.schema)


def eval_node_delta(memo: Memo, nid: int, index: int, db: dict[str, MultisetTable],
                    deltas: dict[str, DeltaPair]) -> MultisetTable:
    """Differential of a node w.r.t. one update, computed from first principles.

    Ignores provable-emptiness flags, so it can audit foreign-key pruning.
    """
    node = memo.node(nid)
    rel = memo.spec.relation_at(index)
    kind = memo.spec.kind_at(index)
    if rel not in node.base_deps:
        raise NullDifferentialError(f"node {nid} does not depend on update {index}")
    if node.kind == LEAF:
        pair = deltas.get(rel)
        raw = (pair.plus if kind == INSERT else pair.minus) if pair else None
        if raw is None:
            raw = MultisetTable(tuple(memo.catalog[rel].column_names()))
        return _filter(_qualify(raw, node.alias), node.filters)
    if node.kind == AGG:
        src = eval_node_delta(memo, node.agg_input, index, db, deltas)
        group = [f"{a}.{c}" for a, c in node.agg.group_cols]
        sums = [f"{a}.{c}" for a, c in node.agg.sum_cols]
        return group_rows(src, group, sums, node.schema)
    op = memo.op(node.ops[0])
    c1, c2 = op.inputs
    dep1 = rel in memo.node(c1).base_deps
    dep2 = rel in memo.node(c2).base_deps
    parts = []
    if dep1:
        d1 = eval_node_delta(memo, c1, index, db, deltas)
        f2 = eval_node_full(memo, c2, db)
        parts.append(hash_join(d1, f2, op.preds, node.schema))
    if dep2:
        f1 = eval_node_full(memo, c1, db)
        if dep1:
            f1 = merge_into(f1, eval_node_delta(memo, c1, index, db, deltas),
                            kind, is_aggregate=False)
        d2 = eval_node_delta(memo, c2, index, db, deltas)
        parts.append(hash_join(f1, d2, op.preds, node.schema))
    out = parts[0]
    for extra in parts[1:]:
        out = bag_union(out, extra)
    return out


# ----------------------------------------------------------------------------
# maintenance propagation

@dataclass
class PlanBook:
    """Plans propagate() executes: one init plan per maintained full result and
    one delta plan per (maintained result, update index) it depends on."""

    full_nodes: list[int]
    init_plans: dict[int, FullPlan]
    delta_plans: dict[tuple[int, int], DeltaPlan]
    mat_deltas: set[tuple[int, int]]


def build_plan_book(opt: Optimizer) -> PlanBook:
    memo = opt.memo
    fulls = sorted(opt.mat_full, key=lambda nid: (memo.node(nid).rank, nid))
    init_plans = {nid: opt.full_plan(nid) for nid in fulls}
    delta_plans: dict[tuple[int, int], DeltaPlan] = {}
    for nid in fulls:
        node = memo.node(nid)
        for i in range(1, opt.n_updates + 1):
            entry = node.entry(i)
            if entry is not None and not entry.empty:
                delta_plans[(nid, i)] = opt.delta_plan(nid, i)
    for nid, i in sorted(opt.mat_delta):
        if (nid, i) not in delta_plans:
            delta_plans[(nid, i)] = opt.delta_plan(nid, i)
    return PlanBook(fulls, init_plans, delta_plans, set(opt.mat_delta))


def apply_update(db: dict[str, MultisetTable], relation: str, kind: str,
                 pair: DeltaPair) -> None:
    if kind == INSERT:
        db[relation] = bag_union(db[relation], pair.plus)
    else:
        db[relation] = bag_monus(db[relation], pair.minus)


def propagate(memo: Memo, book: PlanBook, db: dict[str, MultisetTable],
              deltas: dict[str, DeltaPair]) -> dict[int, MultisetTable]:
    """Replay the update batch, maintaining every materialized full result.

    Updates are applied in index order; at each step every maintained result's
    differential is computed with the chosen plan against the pre-update state,
    then merged (union for inserts, monus for deletes, groupwise for
    aggregates).  Materialized differentials are computed once per step and
    shared.  Returns the final stored contents keyed by node id.
    """
    db = {name: MultisetTable(t.schema, list(t.rows)) for name, t in db.items()}
    stored: dict[int, MultisetTable] = {}
    ctx = _EvalContext(memo, db, stored, deltas, book.mat_deltas, book.delta_plans)
    for nid in book.full_nodes:
        stored[nid] = eval_full_plan(book.init_plans[nid], ctx)
    spec = memo.spec
    for index in range(1, spec.n_updates + 1):
        rel = spec.relation_at(index)
        kind = spec.kind_at(index)
        pair = deltas.get(rel)
        if pair is None:
            continue
        ctx.delta_cache.clear()
        # compute every needed differential against the pre-update state
        computed: dict[int, MultisetTable] = {}
        for nid, i in sorted(book.mat_deltas):
            if i == index:
                eval_delta_plan(ReuseDelta(nid, i), ctx)
        for nid in book.full_nodes:
            plan = book.delta_plans.get((nid, index))
            if plan is not None:
                computed[nid] = eval_delta_plan(plan, ctx)
        for nid in book.full_nodes:
            delta = computed.get(nid)
            if delta is None or not delta.rows:
                continue
            node = memo.node(nid)
            stored[nid] = merge_into(stored[nid], delta, kind,
                                     is_aggregate=node.kind == AGG,
                                     n_group=len(node.agg.group_cols) if node.agg else 0)
        apply_update(db, rel, kind, pair)
    return stored


# ----------------------------------------------------------------------------
# exhaustive plan enumeration

def enumerate_plans(memo: Memo, x: ResultId) -> tuple[float, int]:
    """True minimum model cost and number of alternative plans, M empty.

    Walks every operation choice (and differential term structure) without the
    optimizer's caches; only permitted on memos over at most 4 base relations.
    """
    if memo.spec is None:
        raise ValueError("memo must be annotated")
    base = {n.relation for n in memo.nodes if n.kind == LEAF}
    if len(base) > 4:
        raise TooLargeError(f"enumeration limited to 4 base relations, got {len(base)}")
    full_memo: dict[tuple[int, int], tuple[float, int]] = {}
    delta_memo: dict[tuple[int, int], tuple[float, int]] = {}

    def full_min(nid: int, stage: int) -> tuple[float, int]:
        key = (nid, stage)
        if key in full_memo:
            return full_memo[key]
        node = memo.node(nid)
        if node.kind == LEAF:
            result = (memo.op(node.ops[0]).full_exec[stage], 1)
        else:
            best, count = float("inf"), 0
            for oid in node.ops:
                op = memo.op(oid)
                total, ways = op.full_exec[stage], 1
                for child in op.inputs:
                    c, w = full_min(child, stage)
                    total += c
                    ways *= w
                count += ways
                if total < best:
                    best = total
            result = (best, count)
        full_memo[key] = result
        return result

    def delta_min(nid: int, index: int) -> tuple[float, int]:
        key = (nid, index)
        if key in delta_memo:
            return delta_memo[key]
        node = memo.node(nid)
        entry = node.entry(index)
        if entry is None:
            raise NullDifferentialError(f"node {nid} has no differential {index}")
        if entry.empty:
            result = (0.0, 1)
        elif node.kind == LEAF:
            result = (entry.leaf_total, 1)
        else:
            best, count = float("inf"), 0
            for oid in node.ops:
                info = memo.op(oid).dinfo[index - 1]
                if info is None or info.empty:
                    continue
                total, ways = info.local_total, 1
                for child in info.delta_children:
                    c, w = delta_min(child, index)
                    total += c
                    ways *= w
                for child, stage in info.full_children:
                    c, w = full_min(child, stage)
                    total += c
                    ways *= w
                count += ways
                if total < best:
                    best = total
            result = (best, count)
        delta_memo[key] = result
        return result

    if x.is_full():
        return full_min(x.node, memo.spec.n_updates)
    return delta_min(x.node, x.update)


# ----------------------------------------------------------------------------
# synthetic data generation

def _column_value(rng: random.Random, typ: str, raw: int):
    if typ == "string":
        return f"s{raw}"
    if typ == "decimal":
        return float(raw)
    return raw


def generate_database(catalog: Catalog, rows: int, seed: int,
                      fk_consistent: bool = True) -> dict[str, MultisetTable]:
    """Random tiny database; FK columns reference existing target keys."""
    rng = random.Random(seed)
    db: dict[str, MultisetTable] = {}
    pk_pool: dict[str, list] = {}
    fk_for: dict[tuple[str, str], tuple[str, str]] = {}
    if fk_consistent:
        for fk in catalog.foreign_keys:
            for fc, tc in zip(fk.from_cols, fk.to_cols):
                fk_for[(fk.from_rel, fc)] = (fk.to_rel, tc)
    # referenced relations first so their keys exist for FK sampling
    ordered = sorted(
        catalog.names(),
        key=lambda r: sum(1 for fk in catalog.foreign_keys if fk.from_rel == r),
    )
    for name in ordered:
        rel = catalog[name]
        domain = max(2, rows // 2)
        columns = []
        for col, typ in rel.columns:
            if col in rel.primary_key:
                vals = list(range(rows))
                rng.shuffle(vals)
            elif (name, col) in fk_for:
                target_rel, target_col = fk_for[(name, col)]
                pool = pk_pool.get(f"{target_rel}.{target_col}", [0])
                vals = [rng.choice(pool) for _ in range(rows)]
            else:
                vals = [rng.randrange(domain) for _ in range(rows)]
            columns.append([_column_value(rng, typ, v) for v in vals])
            if col in rel.primary_key:
                pk_pool[f"{name}.{col}"] = vals
        db[name] = MultisetTable(
            rel.column_names(), [tuple(c[i] for c in columns) for i in range(rows)]
        )
    return db


def generate_deltas(catalog: Catalog, db: dict[str, MultisetTable], update_pct: float,
                    seed: int, fk_consistent: bool = True) -> dict[str, DeltaPair]:
    """Insert fresh tuples (update_pct% of current size) and delete half as many.

    Inserted rows of a referenced relation get brand-new primary keys;
    referencing inserts point only at pre-existing keys; deletes of referenced
    relations avoid rows that any referencing tuple points at.
    """
    rng = random.Random(seed + 7919)
    out: dict[str, DeltaPair] = {}
    fk_for: dict[tuple[str, str], tuple[str, str]] = {}
    referenced: dict[str, set] = {}
    if fk_consistent:
        for fk in catalog.foreign_keys:
            src = db[fk.from_rel]
            for fc, tc in zip(fk.from_cols, fk.to_cols):
                fk_for[(fk.from_rel, fc)] = (fk.to_rel, tc)
                i = src.schema.index(fc)
                referenced.setdefault(f"{fk.to_rel}.{tc}", set()).update(
                    row[i] for row in src.rows
                )
    for name in catalog.names():
        rel = catalog[name]
        table = db[name]
        n = len(table.rows)
        n_plus = delta_cardinality(n, update_pct / 100.0)
        n_minus = delta_cardinality(n, update_pct / 200.0)
        domain = max(2, n // 2) if n else 2
        plus_rows = []
        for k in range(n_plus):
            row = []
            for col, typ in rel.columns:
                if col in rel.primary_key:
                    raw = n + k  # fresh key, never seen before
                elif (name, col) in fk_for:
                    target_rel, target_col = fk_for[(name, col)]
                    ttab = db[target_rel]
                    ti = ttab.schema.index(target_col)
                    pool = [r[ti] for r in ttab.rows] or [0]
                    value = rng.choice(pool)
                    row.append(value)
                    continue
                else:
                    raw = rng.randrange(domain)
                row.append(_column_value(rng, typ, raw))
            plus_rows.append(tuple(row))
        candidates = list(range(n))
        keys = referenced.get(f"{name}.{rel.primary_key[0]}") if rel.primary_key else None
        if keys is not None:
            pki = table.schema.index(rel.primary_key[0])
            candidates = [i for i in candidates if table.rows[i][pki] not in keys]
        rng.shuffle(candidates)
        minus_rows = [table.rows[i] for i in candidates[:n_minus]]
        out[name] = DeltaPair(
            MultisetTable(table.schema, plus_rows),
            MultisetTable(table.schema, minus_rows),
        )
    return out


def recompute_oracle(memo: Memo, view_expr: Expr, db: dict[str, MultisetTable],
                     deltas: dict[str, DeltaPair]) -> MultisetTable:
    """Apply the whole batch in update order, then evaluate the body from scratch."""
    db = {name: MultisetTable(t.schema, list(t.rows)) for name, t in db.items()}
    spec = memo.spec
    for index in range(1, spec.n_updates + 1):
        rel = spec.relation_at(index)
        pair = deltas.get(rel)
        if pair is not None:
            apply_update(db, rel, spec.kind_at(index), pair)
    return eval_expr(view_expr, db)
