"""The shared plan memo: equivalence nodes, operation nodes, and annotations.

Equivalence (OR) nodes group all ways of computing one logical result and are
interned by a canonical signature (leaf occurrences with their pinned filters,
the applied join-predicate set, and an optional aggregate spec), so repeated or
reassociated subexpressions collapse to a single node at insert time.
Operation (AND) nodes are algebra operators over equivalence nodes; join
inputs are stored as an unordered pair, which absorbs commutativity.

After expansion every join node carries one operation per split of its leaf
set into two connected halves, i.e. the closure of join associativity and
commutativity without cross products.

Annotation attaches, per node, the estimated properties of the full result at
every update stage 0..2n (stage s = updates 1..s applied) and a 2n-entry
differential array: entry i holds the estimated delta of the node with respect
to update i, a provable-emptiness flag, and which columns carry freshly
inserted primary keys (the handle for foreign-key pruning).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .algebra import (
    Aggregate,
    ColRef,
    Comparison,
    Expr,
    Join,
    JoinPred,
    Scan,
)
from .catalog import Catalog, DELETE, INSERT, UpdateSpec
from .config import Config
from .costs import (
    Cost,
    Stats,
    aggregate_cost,
    join_cost,
    join_selectivity,
    scan_cost,
    mat_cost,
    merge_cost,
    reuse_cost,
    select_selectivity,
)
from .errors import BudgetExceededError

LEAF, JOIN, AGG = "leaf", "join", "agg"
SCAN_OP, JOIN_OP, AGG_OP = "scan", "join", "agg"


@dataclass(frozen=True)
class AggSpec:
    group_cols: tuple[ColRef, ...]
    sum_cols: tuple[ColRef, ...]


@dataclass
class DiffEntry:
    """Differential of one node with respect to one update index."""

    index: int
    stats: Stats
    empty: bool
    fresh: frozenset[int]  # leaf node ids whose primary key values are all new
    reuse_total: float = 0.0
    store_total: float = 0.0
    leaf_total: float = 0.0  # local cost of producing a leaf delta (filter cpu)


@dataclass(frozen=True)
class TermInfo:
    """One join term of a differential operator."""

    delta_child: int
    full_child: int
    full_stage: int  # stage whose statistics describe the full side's value
    updated: bool  # full side is (old value merged with its own update-i delta)
    stats: Stats


@dataclass(frozen=True)
class DiffOpInfo:
    """Differential version of one operation for one update index."""

    terms: tuple[TermInfo, ...]
    local_total: float  # execution cost, inputs excluded
    delta_children: tuple[int, ...]
    full_children: tuple[tuple[int, int], ...]  # (node id, cost stage)
    empty: bool


@dataclass
class EquivNode:
    id: int
    kind: str
    signature: tuple
    leaf_ids: frozenset[int]
    preds: frozenset[JoinPred]
    ops: list[int] = field(default_factory=list)
    parents: list[int] = field(default_factory=list)
    alias: str | None = None  # leaves
    relation: str | None = None  # leaves
    filters: tuple[Comparison, ...] = ()  # leaves
    agg: AggSpec | None = None
    agg_input: int | None = None
    alias_to_leaf: dict[str, int] = field(default_factory=dict)
    base_deps: frozenset[str] = frozenset()
    rank: int = 0
    schema: tuple[str, ...] = ()
    # annotation
    stage_stats: list[Stats] = field(default_factory=list)
    entries: list[DiffEntry | None] = field(default_factory=list)
    reuse_totals: list[float] = field(default_factory=list)
    store_totals: list[float] = field(default_factory=list)
    merge_total: float = 0.0

    def entry(self, index: int) -> DiffEntry | None:
        return self.entries[index - 1]


@dataclass
class OpNode:
    id: int
    kind: str
    inputs: tuple[int, ...]
    output: int
    preds: tuple[JoinPred, ...] = ()
    # annotation
    full_exec: list[float] = field(default_factory=list)
    dinfo: list[DiffOpInfo | None] = field(default_factory=list)


class Memo:
    def __init__(self, node_cap: int = 200_000):
        self.nodes: list[EquivNode] = []
        self.ops: list[OpNode] = []
        self.node_cap = node_cap
        self._sig2node: dict[tuple, int] = {}
        self._sig2op: dict[tuple, int] = {}
        self.views: dict[str, int] = {}
        self._expanded = False
        # filled by annotate()
        self.catalog: Catalog | None = None
        self.spec: UpdateSpec | None = None
        self.cfg: Config | None = None
        self.fk_pruned = False

    # ---- construction -----------------------------------------------------

    def node(self, nid: int) -> EquivNode:
        return self.nodes[nid]

    def op(self, oid: int) -> OpNode:
        return self.ops[oid]

    def count_nodes(self, kind: str | None = None) -> int:
        if kind is None:
            return len(self.nodes)
        return sum(1 for n in self.nodes if n.kind == kind)

    def count_ops(self, kind: str | None = None) -> int:
        if kind is None:
            return len(self.ops)
        return sum(1 for o in self.ops if o.kind == kind)

    def _intern_node(self, sig: tuple, build) -> int:
        nid = self._sig2node.get(sig)
        if nid is not None:
            return nid
        if len(self.nodes) >= self.node_cap:
            raise BudgetExceededError(
                f"memo exceeded node cap of {self.node_cap} equivalence nodes"
            )
        nid = len(self.nodes)
        node = build(nid)
        self.nodes.append(node)
        self._sig2node[sig] = nid
        return nid

    def _add_op(self, kind: str, inputs: tuple[int, ...], output: int,
                preds: tuple[JoinPred, ...] = ()) -> int:
        if kind == JOIN_OP:
            inputs = tuple(sorted(inputs))
        sig = (kind, inputs, preds, output)
        oid = self._sig2op.get(sig)
        if oid is not None:
            return oid
        oid = len(self.ops)
        self.ops.append(OpNode(oid, kind, inputs, output, preds))
        self.nodes[output].ops.append(oid)
        for child in inputs:
            self.nodes[child].parents.append(oid)
        return oid

    def intern_leaf(self, scan: Scan, catalog: Catalog) -> int:
        sig = (LEAF, scan.alias, scan.relation, scan.predicate)

        def build(nid: int) -> EquivNode:
            rel = catalog[scan.relation]
            schema = tuple(f"{scan.alias}.{c}" for c in rel.column_names())
            return EquivNode(
                id=nid,
                kind=LEAF,
                signature=sig,
                leaf_ids=frozenset([nid]),
                preds=frozenset(),
                alias=scan.alias,
                relation=scan.relation,
                filters=scan.predicate,
                alias_to_leaf={scan.alias: nid},
                base_deps=frozenset([scan.relation]),
                rank=1,
                schema=schema,
            )

        nid = self._intern_node(sig, build)
        self._add_op(SCAN_OP, (nid,), nid)
        return nid

    def intern_join_node(self, leaf_ids: frozenset[int], preds: frozenset[JoinPred]) -> int:
        if len(leaf_ids) == 1:
            return next(iter(leaf_ids))
        sig = (JOIN, leaf_ids, preds)

        def build(nid: int) -> EquivNode:
            leaves = sorted(leaf_ids, key=lambda l: self.nodes[l].alias)
            alias_to_leaf = {self.nodes[l].alias: l for l in leaves}
            schema = tuple(itertools.chain.from_iterable(self.nodes[l].schema for l in leaves))
            return EquivNode(
                id=nid,
                kind=JOIN,
                signature=sig,
                leaf_ids=leaf_ids,
                preds=preds,
                alias_to_leaf=alias_to_leaf,
                base_deps=frozenset(self.nodes[l].relation for l in leaf_ids),
                rank=len(leaf_ids),
                schema=schema,
            )

        return self._intern_node(sig, build)

    def intern_agg_node(self, input_id: int, spec: AggSpec) -> int:
        sig = (AGG, input_id, spec.group_cols, spec.sum_cols)

        def build(nid: int) -> EquivNode:
            src = self.nodes[input_id]
            schema = tuple(f"{a}.{c}" for a, c in spec.group_cols)
            schema += tuple(f"sum({a}.{c})" for a, c in spec.sum_cols)
            schema += ("__count",)
            return EquivNode(
                id=nid,
                kind=AGG,
                signature=sig,
                leaf_ids=src.leaf_ids,
                preds=src.preds,
                agg=spec,
                agg_input=input_id,
                alias_to_leaf=dict(src.alias_to_leaf),
                base_deps=src.base_deps,
                rank=src.rank + 1,
                schema=schema,
            )

        nid = self._intern_node(sig, build)
        self._add_op(AGG_OP, (input_id,), nid)
        return nid


def insert_expression(memo: Memo, expr: Expr, catalog: Catalog) -> int:
    """Intern a normalized expression; returns the root equivalence node id."""
    if isinstance(expr, Scan):
        return memo.intern_leaf(expr, catalog)
    if isinstance(expr, Join):
        left = insert_expression(memo, expr.left, catalog)
        right = insert_expression(memo, expr.right, catalog)
        lnode, rnode = memo.node(left), memo.node(right)
        leaf_ids = lnode.leaf_ids | rnode.leaf_ids
        preds = lnode.preds | rnode.preds | frozenset(expr.predicates)
        out = memo.intern_join_node(leaf_ids, preds)
        memo._add_op(JOIN_OP, (left, right), out, tuple(sorted(expr.predicates,
                                                               key=lambda p: (p.left, p.right))))
        return out
    if isinstance(expr, Aggregate):
        src = insert_expression(memo, expr.input, catalog)
        spec = AggSpec(expr.group_cols, expr.sum_columns())
        return memo.intern_agg_node(src, spec)
    raise TypeError(f"cannot insert {expr!r}; normalize first")


def insert_view(memo: Memo, name: str, expr: Expr, catalog: Catalog) -> int:
    root = insert_expression(memo, expr, catalog)
    memo.views[name] = root
    return root


# ----------------------------------------------------------------------------
# expansion

def _connected(memo: Memo, leaf_ids: frozenset[int], preds: frozenset[JoinPred],
               subset: frozenset[int]) -> bool:
    if len(subset) <= 1:
        return True
    node_alias = {memo.node(l).alias: l for l in leaf_ids}
    adj: dict[int, set[int]] = {l: set() for l in subset}
    for p in preds:
        a, b = node_alias.get(p.left[0]), node_alias.get(p.right[0])
        if a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    start = next(iter(subset))
    seen, frontier = {start}, [start]
    while frontier:
        cur = frontier.pop()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return len(seen) == len(subset)


def _internal_preds(memo: Memo, preds: frozenset[JoinPred], subset: frozenset[int],
                    alias_to_leaf: dict[str, int]) -> frozenset[JoinPred]:
    return frozenset(
        p for p in preds
        if alias_to_leaf[p.left[0]] in subset and alias_to_leaf[p.right[0]] in subset
    )


def expand(memo: Memo) -> Memo:
    """Add every join operation over connected splits, to fixpoint."""
    queue = [n.id for n in memo.nodes if n.kind == JOIN]
    seen = set(queue)
    while queue:
        nid = queue.pop(0)
        node = memo.node(nid)
        leaves = sorted(node.leaf_ids)
        first, rest = leaves[0], leaves[1:]
        for r in range(len(rest) + 1):
            for combo in itertools.combinations(rest, r):
                s1 = frozenset((first,) + combo)
                s2 = node.leaf_ids - s1
                if not s2:
                    continue
                cross = tuple(sorted(
                    (p for p in node.preds
                     if (node.alias_to_leaf[p.left[0]] in s1)
                     != (node.alias_to_leaf[p.right[0]] in s1)),
                    key=lambda p: (p.left, p.right),
                ))
                if not cross:
                    continue
                p1 = _internal_preds(memo, node.preds, s1, node.alias_to_leaf)
                p2 = _internal_preds(memo, node.preds, s2, node.alias_to_leaf)
                if not _connected(memo, node.leaf_ids, p1, s1):
                    continue
                if not _connected(memo, node.leaf_ids, p2, s2):
                    continue
                c1 = memo.intern_join_node(s1, p1)
                c2 = memo.intern_join_node(s2, p2)
                memo._add_op(JOIN_OP, (c1, c2), nid, cross)
                for child in (c1, c2):
                    if memo.node(child).kind == JOIN and child not in seen:
                        seen.add(child)
                        queue.append(child)
    memo._expanded = True
    return memo


# ----------------------------------------------------------------------------
# annotation

class _LeafStats:
    """Per-leaf staged cardinalities and distinct estimates."""

    def __init__(self, memo: Memo, catalog: Catalog, spec: UpdateSpec, cfg: Config):
        self.memo, self.catalog, self.spec, self.cfg = memo, catalog, spec, cfg
        n_stages = spec.n_updates + 1
        self.rel_stage: dict[str, list[Stats]] = {}
        for name in catalog.names():
            rel = catalog[name]
            self.rel_stage[name] = [
                Stats.make(spec.staged_cardinality(name, s), rel.tuple_bytes, cfg,
                           {c: rel.distinct_of(c) for c in rel.column_names()})
                for s in range(n_stages)
            ]
        self.leaf_card: dict[int, list[float]] = {}
        self.leaf_sel: dict[int, float] = {}
        for node in memo.nodes:
            if node.kind != LEAF:
                continue
            rel = catalog[node.relation]
            sel = 1.0
            for cmpr in node.filters:
                sel *= select_selectivity(cmpr.op, rel.distinct_of(cmpr.col[1]))
            self.leaf_sel[node.id] = sel
            self.leaf_card[node.id] = [
                self.rel_stage[node.relation][s].cardinality * sel for s in range(n_stages)
            ]

    def distinct(self, leaf_id: int, column: str, stage: int) -> float:
        node = self.memo.node(leaf_id)
        base = self.catalog[node.relation].distinct_of(column)
        return min(float(base), max(1.0, self.leaf_card[leaf_id][stage]))

    def delta_card(self, leaf_id: int, index: int) -> float:
        """Estimated tuples of a leaf's delta: the raw delta through the leaf filter."""
        node = self.memo.node(leaf_id)
        ds = self.spec.delta_stats(index)
        card = float(ds.cardinality)
        for cmpr in node.filters:
            card *= select_selectivity(cmpr.op, max(1, ds.distinct.get(cmpr.col[1], 1)))
        return card

    def delta_distinct(self, leaf_id: int, column: str, index: int) -> float:
        node = self.memo.node(leaf_id)
        base = self.catalog[node.relation].distinct_of(column)
        return min(float(base), max(1.0, self.delta_card(leaf_id, index)))


def _pred_selectivity(memo: Memo, ls: _LeafStats, node: EquivNode, pred: JoinPred,
                      stage_of_leaf) -> float:
    la, lc = pred.left
    ra, rc = pred.right
    lid, rid = node.alias_to_leaf[la], node.alias_to_leaf[ra]
    return join_selectivity(stage_of_leaf(lid, lc), stage_of_leaf(rid, rc))


def _node_stage_stats(memo: Memo, ls: _LeafStats, node: EquivNode, stage: int,
                      cfg: Config) -> Stats:
    if node.kind == LEAF:
        rel = ls.catalog[node.relation]
        distinct = {c: ls.distinct(node.id, c, stage) for c in rel.column_names()}
        return Stats.make(ls.leaf_card[node.id][stage], rel.tuple_bytes, cfg, distinct)
    if node.kind == JOIN:
        card = 1.0
        bytes_ = 0.0
        for lid in node.leaf_ids:
            card *= ls.leaf_card[lid][stage]
            bytes_ += ls.catalog[memo.node(lid).relation].tuple_bytes
        for pred in node.preds:
            card *= _pred_selectivity(memo, ls, node, pred,
                                      lambda l, c: ls.distinct(l, c, stage))
        return Stats.make(card, bytes_, cfg)
    # aggregate
    src = memo.node(node.agg_input)
    src_stats = src.stage_stats[stage]
    groups = 1.0
    for alias, col in node.agg.group_cols:
        groups *= max(1.0, ls.distinct(node.alias_to_leaf[alias], col, stage))
    card = min(groups, src_stats.cardinality)
    bytes_ = 8.0 * (len(node.agg.group_cols) + len(node.agg.sum_cols) + 1)
    return Stats.make(card, bytes_, cfg)


def _join_term_stats(memo: Memo, ls: _LeafStats, parent: EquivNode, op: OpNode,
                     index: int, delta_child: int, full_child: int, full_stage: int,
                     cfg: Config) -> Stats:
    """Estimated output of one differential join term."""
    dstats = memo.node(delta_child).entry(index).stats
    fstats = memo.node(full_child).stage_stats[full_stage]
    card = dstats.cardinality * fstats.cardinality
    rel = ls.spec.relation_at(index)

    def side_distinct(leaf_id: int, col: str) -> float:
        node = memo.node(leaf_id)
        if leaf_id in memo.node(delta_child).leaf_ids:
            if node.relation == rel:
                return ls.delta_distinct(leaf_id, col, index)
            return ls.distinct(leaf_id, col, full_stage)
        return ls.distinct(leaf_id, col, full_stage)

    for pred in op.preds:
        card *= _pred_selectivity(memo, ls, parent, pred, side_distinct)
    return Stats.make(card, dstats.tuple_bytes + fstats.tuple_bytes, cfg)


def _fk_prunes(memo: Memo, catalog: Catalog, op_preds: tuple[JoinPred, ...],
               fresh: frozenset[int], other_node: EquivNode) -> bool:
    """True when the delta side's fresh keys are equated with a referencing FK.

    Freshly inserted tuples of a referenced relation carry primary-key values
    no referencing tuple can point at yet, so the join term is empty.
    """
    if not fresh:
        return False
    preds = set(op_preds)
    for leaf_id in fresh:
        leaf = memo.node(leaf_id)
        if not catalog[leaf.relation].primary_key:
            continue
        for fk in catalog.foreign_keys:
            if fk.to_rel != leaf.relation:
                continue
            for other_alias, other_leaf in other_node.alias_to_leaf.items():
                if memo.node(other_leaf).relation != fk.from_rel:
                    continue
                required = {
                    JoinPred.make((leaf.alias, tc), (other_alias, fc))
                    for fc, tc in zip(fk.from_cols, fk.to_cols)
                }
                if required <= preds:
                    return True
    return False


def _build_dinfo(memo: Memo, ls: _LeafStats, node: EquivNode, op: OpNode, index: int,
                 cfg: Config, fk: bool) -> DiffOpInfo | None:
    catalog, spec = ls.catalog, ls.spec
    if op.kind == AGG_OP:
        src = memo.node(op.inputs[0])
        src_entry = src.entry(index)
        if src_entry is None:
            return None
        if src_entry.empty:
            return DiffOpInfo((), 0.0, (), (), True)
        out = node.entry(index)
        out_stats = out.stats if out is not None else src_entry.stats
        local = aggregate_cost(src_entry.stats, out_stats, True, cfg).total(cfg)
        return DiffOpInfo((), local, (op.inputs[0],), (), False)

    # join operation
    c1, c2 = op.inputs
    e1, e2 = memo.node(c1).entry(index), memo.node(c2).entry(index)
    dep1 = e1 is not None and not e1.empty
    dep2 = e2 is not None and not e2.empty
    if not dep1 and not dep2:
        return DiffOpInfo((), 0.0, (), (), True)
    stage = index - 1
    terms: list[TermInfo] = []
    if dep1 and not (fk and _fk_prunes(memo, catalog, op.preds, e1.fresh, memo.node(c2))):
        terms.append(TermInfo(c1, c2, stage, False,
                              _join_term_stats(memo, ls, node, op, index, c1, c2, stage, cfg)))
    if dep2 and not (fk and _fk_prunes(memo, catalog, op.preds, e2.fresh, memo.node(c1))):
        full_stage = index if dep1 else stage
        terms.append(TermInfo(c2, c1, full_stage, dep1,
                              _join_term_stats(memo, ls, node, op, index, c2, c1,
                                               full_stage, cfg)))
    if not terms:
        return DiffOpInfo((), 0.0, (), (), True)

    local = Cost()
    delta_children: list[int] = []
    full_children: list[tuple[int, int]] = []
    for term in terms:
        dstats = memo.node(term.delta_child).entry(index).stats
        fstats = memo.node(term.full_child).stage_stats[term.full_stage]
        local = local + join_cost(dstats, fstats, (True, True), cfg, term.stats.cardinality)
        if term.delta_child not in delta_children:
            delta_children.append(term.delta_child)
        # the full side is always computed as of the pre-update stage; an
        # updated side additionally folds in its own delta, already costed
        full_children.append((term.full_child, stage))
        if term.updated:
            upd = memo.node(term.full_child).entry(index)
            old = memo.node(term.full_child).stage_stats[stage]
            local = local + Cost(cpu_tuples=old.cardinality + upd.stats.cardinality)
            if term.full_child not in delta_children:
                delta_children.append(term.full_child)
    if len(terms) == 2:
        local = local + Cost(cpu_tuples=sum(t.stats.cardinality for t in terms))
    return DiffOpInfo(tuple(terms), local.total(cfg), tuple(delta_children),
                      tuple(full_children), False)


def _node_entry(memo: Memo, ls: _LeafStats, node: EquivNode, index: int,
                cfg: Config, fk: bool) -> DiffEntry | None:
    catalog, spec = ls.catalog, ls.spec
    rel = spec.relation_at(index)
    if rel not in node.base_deps:
        return None
    kind = spec.kind_at(index)
    if node.kind == LEAF:
        raw = spec.delta_stats(index)
        empty = raw.cardinality == 0
        card = 0.0 if empty else ls.delta_card(node.id, index)
        distinct = {c: ls.delta_distinct(node.id, c, index)
                    for c in catalog[rel].column_names()} if not empty else {}
        stats = Stats.make(card, catalog[rel].tuple_bytes, cfg, distinct)
        fresh = frozenset()
        if kind == INSERT and not empty and catalog[rel].primary_key:
            fresh = frozenset([node.id])
        leaf_total = 0.0
        if node.filters and not empty:
            leaf_total = Cost(cpu_tuples=float(raw.cardinality)).total(cfg)
        entry = DiffEntry(index, stats, empty, fresh, leaf_total=leaf_total)
    elif node.kind == AGG:
        src = memo.node(node.agg_input).entry(index)
        if src.empty:
            stats = Stats.make(0.0, node.stage_stats[0].tuple_bytes, cfg)
            entry = DiffEntry(index, stats, True, frozenset())
        else:
            groups = 1.0
            for alias, col in node.agg.group_cols:
                lid = node.alias_to_leaf[alias]
                groups *= max(1.0, min(ls.distinct(lid, col, index - 1),
                                       src.stats.cardinality))
            card = min(groups, src.stats.cardinality)
            stats = Stats.make(card, node.stage_stats[0].tuple_bytes, cfg)
            entry = DiffEntry(index, stats, False, frozenset())
    else:
        # join: shape and size follow the representative (first) operation
        rep = None
        for oid in node.ops:
            info = memo.op(oid).dinfo[index - 1]
            if info is not None:
                rep = info
                break
        if rep is None or rep.empty:
            stats = Stats.make(0.0, node.stage_stats[0].tuple_bytes, cfg)
            entry = DiffEntry(index, stats, True, frozenset())
        else:
            card = sum(t.stats.cardinality for t in rep.terms)
            fresh_sets = [memo.node(t.delta_child).entry(index).fresh for t in rep.terms]
            fresh = frozenset.intersection(*fresh_sets) if fresh_sets else frozenset()
            stats = Stats.make(card, node.stage_stats[0].tuple_bytes, cfg)
            entry = DiffEntry(index, stats, False, fresh)
    entry.reuse_total = reuse_cost(entry.stats).total(cfg)
    entry.store_total = mat_cost(entry.stats).total(cfg)
    return entry


def _annotate_entries(memo: Memo, ls: _LeafStats, cfg: Config, fk: bool) -> None:
    n = ls.spec.n_updates
    order = sorted(memo.nodes, key=lambda nd: (nd.rank, nd.id))
    for node in order:
        node.entries = [None] * n
    for op in memo.ops:
        op.dinfo = [None] * n
    for index in range(1, n + 1):
        for node in order:
            if ls.spec.relation_at(index) not in node.base_deps:
                continue
            if node.kind == JOIN:
                for oid in node.ops:
                    op = memo.op(oid)
                    if op.kind == JOIN_OP:
                        op.dinfo[index - 1] = _build_dinfo(memo, ls, node, op, index, cfg, fk)
            node.entries[index - 1] = _node_entry(memo, ls, node, index, cfg, fk)
            if node.kind == AGG:
                for oid in node.ops:
                    op = memo.op(oid)
                    if op.kind == AGG_OP:
                        op.dinfo[index - 1] = _build_dinfo(memo, ls, node, op, index, cfg, fk)


def annotate(memo: Memo, catalog: Catalog, spec: UpdateSpec, cfg: Config) -> Memo:
    """Populate staged properties, differential entries, and cost caches."""
    memo.catalog, memo.spec, memo.cfg = catalog, spec, cfg
    memo.fk_pruned = False
    ls = _LeafStats(memo, catalog, spec, cfg)
    memo._leaf_stats = ls
    n_stages = spec.n_updates + 1
    for node in sorted(memo.nodes, key=lambda nd: (nd.rank, nd.id)):
        node.stage_stats = [_node_stage_stats(memo, ls, node, s, cfg) for s in range(n_stages)]
        node.reuse_totals = [reuse_cost(st).total(cfg) for st in node.stage_stats]
        node.store_totals = [mat_cost(st).total(cfg) for st in node.stage_stats]
    for op in memo.ops:
        out = memo.node(op.output)
        if op.kind == SCAN_OP:
            base = ls.rel_stage[out.relation]
            op.full_exec = [scan_cost(base[s]).total(cfg) for s in range(n_stages)]
        elif op.kind == JOIN_OP:
            a, b = (memo.node(i) for i in op.inputs)
            op.full_exec = [
                join_cost(a.stage_stats[s], b.stage_stats[s], (True, True), cfg,
                          out.stage_stats[s].cardinality).total(cfg)
                for s in range(n_stages)
            ]
        else:
            src = memo.node(op.inputs[0])
            op.full_exec = [
                aggregate_cost(src.stage_stats[s], out.stage_stats[s], True, cfg).total(cfg)
                for s in range(n_stages)
            ]
    _annotate_entries(memo, ls, cfg, fk=False)
    _finish_merge_totals(memo, cfg)
    return memo


def prune_fk_empty(memo: Memo, catalog: Catalog) -> Memo:
    """Re-derive differential entries with foreign-key emptiness rules applied."""
    if memo.spec is None:
        raise ValueError("annotate must run before prune_fk_empty")
    _annotate_entries(memo, memo._leaf_stats, memo.cfg, fk=True)
    _finish_merge_totals(memo, memo.cfg)
    memo.fk_pruned = True
    return memo


def _finish_merge_totals(memo: Memo, cfg: Config) -> None:
    final = memo.spec.n_updates
    for node in memo.nodes:
        deltas = [e.stats for e in node.entries if e is not None and not e.empty]
        node.merge_total = merge_cost(node.stage_stats[final], deltas).total(cfg)


# ----------------------------------------------------------------------------
# rendering

def signature_str(memo: Memo, nid: int) -> str:
    node = memo.node(nid)
    if node.kind == LEAF:
        name = node.alias if node.alias == node.relation else f"{node.alias}={node.relation}"
        if node.filters:
            conds = ",".join(f"{c.col[1]}{c.op}{c.value}" for c in node.filters)
            return f"{name}[{conds}]"
        return name
    if node.kind == JOIN:
        leaves = sorted(memo.node(l).alias for l in node.leaf_ids)
        preds = ",".join(sorted(str(p) for p in node.preds))
        return "*".join(leaves) + (f"[{preds}]" if preds else "")
    inner = signature_str(memo, node.agg_input)
    group = ",".join(f"{a}.{c}" for a, c in node.agg.group_cols)
    sums = ",".join(f"sum({a}.{c})" for a, c in node.agg.sum_cols)
    return f"groupby({group};{sums})({inner})"


def dump(memo: Memo) -> str:
    lines = []
    for node in memo.nodes:
        card = node.stage_stats[0].cardinality if node.stage_stats else float("nan")
        deps = ",".join(sorted(node.base_deps))
        lines.append(
            f"eq {node.id}: {signature_str(memo, node.id)} deps={{{deps}}} card={card:.0f}"
        )
    for op in memo.ops:
        ins = ",".join(str(i) for i in op.inputs)
        preds = ",".join(str(p) for p in op.preds)
        extra = f" on {preds}" if preds else ""
        lines.append(f"op {op.id}: {op.kind}({ins}) -> {op.output}{extra}")
    return "\n".join(lines)
