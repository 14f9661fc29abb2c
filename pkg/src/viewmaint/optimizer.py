"""Best plans and costs over the annotated memo, given a materialized set.

Each equivalence node owns one cost slot per full-result stage (0..2n) and one
per differential index (1..2n).  A slot is the minimum over the node's
operations of the operation's execution cost plus its children's costs, where
a child materialized in M may be read back instead of computed.  Slots cache
scalar weighted totals; component breakdowns are reconstructed on demand by
walking the chosen plan.

Changing M only ever affects ancestors of the changed result, so the caches
are maintained incrementally: materializing a full result dirties ancestors'
full slots and all their differential slots, materializing a differential for
update i dirties ancestors' index-i slots only, and propagation stops at nodes
whose slots did not change.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Union

from .costs import Cost, ZERO_COST, aggregate_cost, join_cost, mat_cost, merge_cost, reuse_cost, scan_cost
from .errors import NullDifferentialError
from .memo import AGG, AGG_OP, JOIN, JOIN_OP, LEAF, Memo, SCAN_OP

FULL = 0  # update index of a full result


@dataclass(frozen=True, order=True)
class ResultId:
    node: int
    update: int = FULL

    def is_full(self) -> bool:
        return self.update == FULL


# ---- plan trees -------------------------------------------------------------

@dataclass(frozen=True)
class ReuseFull:
    node: int


@dataclass(frozen=True)
class ComputeOp:
    op: int
    children: tuple["FullPlan", ...]


FullPlan = Union[ReuseFull, ComputeOp]


@dataclass(frozen=True)
class EmptyDelta:
    node: int
    index: int


@dataclass(frozen=True)
class DeltaLeaf:
    node: int
    index: int


@dataclass(frozen=True)
class ReuseDelta:
    node: int
    index: int


@dataclass(frozen=True)
class TermPlan:
    delta: "DeltaPlan"
    full: FullPlan
    full_node: int
    full_stage: int
    updated: bool
    update_delta: "DeltaPlan | None"


@dataclass(frozen=True)
class DeltaAgg:
    op: int
    index: int
    input: "DeltaPlan"


@dataclass(frozen=True)
class DeltaJoin:
    op: int
    index: int
    terms: tuple[TermPlan, ...]


DeltaPlan = Union[EmptyDelta, DeltaLeaf, ReuseDelta, DeltaAgg, DeltaJoin]

_EMPTY = -2
_LEAF = -1
_ALL = -1  # scope marker: all differential indices


class Optimizer:
    """Stateful cost/plan cache for one memo and one materialized set."""

    def __init__(self, memo: Memo, materialized: Iterable[ResultId] = (),
                 incremental: bool = True):
        if memo.spec is None:
            raise ValueError("memo must be annotated before optimization")
        self.memo = memo
        self.cfg = memo.cfg
        self.n_updates = memo.spec.n_updates
        self.final = self.n_updates
        self.incremental = incremental
        self.visits = 0
        self.mat_full: set[int] = set()
        self.mat_delta: set[tuple[int, int]] = set()
        n_nodes = len(memo.nodes)
        stages = self.final + 1
        self._full: list[list[float]] = [[0.0] * stages for _ in range(n_nodes)]
        self._full_choice: list[list[int]] = [[-1] * stages for _ in range(n_nodes)]
        self._delta: list[list[float]] = [[0.0] * self.n_updates for _ in range(n_nodes)]
        self._delta_choice: list[list[int]] = [
            [_EMPTY] * self.n_updates for _ in range(n_nodes)
        ]
        self._topo = sorted(range(n_nodes), key=lambda nid: (memo.node(nid).rank, nid))
        for x in materialized:
            if x.is_full():
                self.mat_full.add(x.node)
            else:
                self.mat_delta.add((x.node, x.update))
        self._recompute_all()

    # ---- child cost lookups (reuse-aware)

    def _cfull(self, child: int, stage: int) -> float:
        cost = self._full[child][stage]
        if child in self.mat_full:
            return min(cost, self.memo.node(child).reuse_totals[stage])
        return cost

    def _cdelta(self, child: int, index: int) -> float:
        cost = self._delta[child][index - 1]
        if (child, index) in self.mat_delta:
            return min(cost, self.memo.node(child).entry(index).reuse_total)
        return cost

    # ---- slot recomputation

    def _slot_full(self, nid: int, stage: int) -> tuple[float, int]:
        node = self.memo.node(nid)
        if node.kind == LEAF:
            oid = node.ops[0]
            return self.memo.op(oid).full_exec[stage], oid
        best, choice = float("inf"), -1
        for oid in node.ops:
            op = self.memo.op(oid)
            total = op.full_exec[stage]
            for child in op.inputs:
                total += self._cfull(child, stage)
            if total < best:
                best, choice = total, oid
        return best, choice

    def _slot_delta(self, nid: int, index: int) -> tuple[float, int]:
        node = self.memo.node(nid)
        entry = node.entry(index)
        if entry is None:
            return 0.0, _EMPTY
        if entry.empty:
            return 0.0, _EMPTY
        if node.kind == LEAF:
            return entry.leaf_total, _LEAF
        best, choice = float("inf"), _EMPTY
        for oid in node.ops:
            info = self.memo.op(oid).dinfo[index - 1]
            if info is None or info.empty:
                continue
            total = info.local_total
            for child in info.delta_children:
                total += self._cdelta(child, index)
            for child, stage in info.full_children:
                total += self._cfull(child, stage)
            if total < best:
                best, choice = total, oid
        return best, choice

    def _recompute_node(self, nid: int, full_scope: bool, delta_scope) -> tuple[bool, set[int]]:
        """Recompute the requested slots; returns what actually changed."""
        self.visits += 1
        full_changed = False
        if full_scope:
            row, choices = self._full[nid], self._full_choice[nid]
            for s in range(self.final + 1):
                cost, choice = self._slot_full(nid, s)
                if cost != row[s] or choice != choices[s]:
                    row[s], choices[s] = cost, choice
                    full_changed = True
        changed_deltas: set[int] = set()
        indices = range(1, self.n_updates + 1) if (full_scope or delta_scope is _ALL) \
            else sorted(delta_scope)
        node = self.memo.node(nid)
        for i in indices:
            if node.entry(i) is None:
                continue
            cost, choice = self._slot_delta(nid, i)
            if cost != self._delta[nid][i - 1] or choice != self._delta_choice[nid][i - 1]:
                self._delta[nid][i - 1] = cost
                self._delta_choice[nid][i - 1] = choice
                changed_deltas.add(i)
        return full_changed, changed_deltas

    def _recompute_all(self) -> None:
        for nid in self._topo:
            self._recompute_node(nid, True, _ALL)

    def _parents_of(self, nid: int) -> set[int]:
        return {self.memo.op(oid).output for oid in self.memo.node(nid).parents
                if self.memo.op(oid).output != nid}

    def _propagate(self, start: int, full_scope: bool, delta_scope) -> None:
        if not self.incremental:
            self._recompute_all()
            return
        pending: dict[int, tuple[bool, set[int] | object]] = {}

        def enqueue(nid: int, full_s: bool, deltas) -> None:
            cur = pending.get(nid)
            if cur is None:
                pending[nid] = (full_s, deltas if deltas is _ALL else set(deltas))
                heapq.heappush(heap, (self.memo.node(nid).rank, nid))
                return
            cf, cd = cur
            nf = cf or full_s
            nd = _ALL if (cd is _ALL or deltas is _ALL) else (cd | set(deltas))
            pending[nid] = (nf, nd)

        heap: list[tuple[int, int]] = []
        for parent in self._parents_of(start):
            enqueue(parent, full_scope, delta_scope)
        while heap:
            _, nid = heapq.heappop(heap)
            if nid not in pending:
                continue
            full_s, deltas = pending.pop(nid)
            full_changed, changed_deltas = self._recompute_node(nid, full_s, deltas)
            if full_changed or changed_deltas:
                for parent in self._parents_of(nid):
                    enqueue(parent, full_changed,
                            _ALL if full_changed else changed_deltas)

    def add(self, x: ResultId) -> None:
        """Mark a result materialized and update caches for the new M."""
        if x.is_full():
            if x.node in self.mat_full:
                return
            self.mat_full.add(x.node)
            self._propagate(x.node, True, _ALL)
        else:
            key = (x.node, x.update)
            if key in self.mat_delta:
                return
            self.mat_delta.add(key)
            self._propagate(x.node, False, {x.update})

    def remove(self, x: ResultId) -> None:
        if x.is_full():
            if x.node not in self.mat_full:
                return
            self.mat_full.discard(x.node)
            self._propagate(x.node, True, _ALL)
        else:
            key = (x.node, x.update)
            if key not in self.mat_delta:
                return
            self.mat_delta.discard(key)
            self._propagate(x.node, False, {x.update})

    def materialized(self) -> list[ResultId]:
        out = [ResultId(n) for n in sorted(self.mat_full)]
        out += [ResultId(n, i) for n, i in sorted(self.mat_delta)]
        return out

    # ---- cost readouts

    def compute_cost(self, nid: int, stage: int | None = None) -> float:
        """Cost of computing the full result from scratch (exploiting M)."""
        return self._full[nid][self.final if stage is None else stage]

    def delta_cost(self, nid: int, index: int) -> float:
        """Cost of computing the node's differential for one update."""
        if self.memo.node(nid).entry(index) is None:
            raise NullDifferentialError(
                f"node {nid} does not depend on update {index}"
            )
        return self._delta[nid][index - 1]

    def total_delta_cost(self, nid: int) -> float:
        node = self.memo.node(nid)
        return sum(
            self._delta[nid][i - 1]
            for i in range(1, self.n_updates + 1)
            if node.entry(i) is not None
        )

    def maintain_cost(self, nid: int) -> float:
        return self.total_delta_cost(nid) + self.memo.node(nid).merge_total

    def recompute_path_cost(self, nid: int) -> float:
        return self._full[nid][self.final] + self.memo.node(nid).store_totals[self.final]

    def result_cost(self, x: ResultId) -> float:
        if x.is_full():
            return min(self.recompute_path_cost(x.node), self.maintain_cost(x.node))
        entry = self.memo.node(x.node).entry(x.update)
        if entry is None:
            raise NullDifferentialError(f"node {x.node} has no differential {x.update}")
        return self._delta[x.node][x.update - 1] + entry.store_total

    def set_cost(self, results: Iterable[ResultId]) -> float:
        return sum(self.result_cost(x) for x in results)

    def prefers_maintenance(self, nid: int) -> bool:
        return self.maintain_cost(nid) < self.recompute_path_cost(nid)

    # ---- plan extraction

    def full_plan(self, nid: int, stage: int | None = None) -> FullPlan:
        """Chosen compute plan for the node's full result (never a bare reuse)."""
        return self._build_full(nid, self.final if stage is None else stage, False)

    def _build_full(self, nid: int, stage: int, allow_reuse: bool) -> FullPlan:
        node = self.memo.node(nid)
        if allow_reuse and nid in self.mat_full \
                and node.reuse_totals[stage] <= self._full[nid][stage]:
            return ReuseFull(nid)
        if node.kind == LEAF:
            return ComputeOp(self._full_choice[nid][stage], ())
        oid = self._full_choice[nid][stage]
        op = self.memo.op(oid)
        return ComputeOp(oid, tuple(self._build_full(c, stage, True) for c in op.inputs))

    def delta_plan(self, nid: int, index: int) -> DeltaPlan:
        if self.memo.node(nid).entry(index) is None:
            raise NullDifferentialError(f"node {nid} does not depend on update {index}")
        return self._build_delta(nid, index, False)

    def _build_delta(self, nid: int, index: int, allow_reuse: bool) -> DeltaPlan:
        node = self.memo.node(nid)
        entry = node.entry(index)
        if entry is None or entry.empty:
            return EmptyDelta(nid, index)
        if allow_reuse and (nid, index) in self.mat_delta \
                and entry.reuse_total <= self._delta[nid][index - 1]:
            return ReuseDelta(nid, index)
        if node.kind == LEAF:
            return DeltaLeaf(nid, index)
        oid = self._delta_choice[nid][index - 1]
        op = self.memo.op(oid)
        if op.kind == AGG_OP:
            return DeltaAgg(oid, index, self._build_delta(op.inputs[0], index, True))
        info = op.dinfo[index - 1]
        terms = []
        for term in info.terms:
            update_delta = None
            if term.updated:
                update_delta = self._build_delta(term.full_child, index, True)
            terms.append(TermPlan(
                delta=self._build_delta(term.delta_child, index, True),
                full=self._build_full(term.full_child, index - 1, True),
                full_node=term.full_child,
                full_stage=term.full_stage,
                updated=term.updated,
                update_delta=update_delta,
            ))
        return DeltaJoin(oid, index, tuple(terms))

    # ---- component breakdowns (reconstructed from plans)

    def full_plan_cost(self, plan: FullPlan, stage: int | None = None) -> Cost:
        stage = self.final if stage is None else stage
        if isinstance(plan, ReuseFull):
            return reuse_cost(self.memo.node(plan.node).stage_stats[stage])
        op = self.memo.op(plan.op)
        cost = self._op_exec_cost(op, stage)
        for child in plan.children:
            cost = cost + self.full_plan_cost(child, stage)
        return cost

    def delta_plan_cost(self, plan: DeltaPlan) -> Cost:
        if isinstance(plan, EmptyDelta):
            return ZERO_COST
        if isinstance(plan, ReuseDelta):
            return reuse_cost(self.memo.node(plan.node).entry(plan.index).stats)
        if isinstance(plan, DeltaLeaf):
            node = self.memo.node(plan.node)
            entry = node.entry(plan.index)
            if node.filters:
                raw = self.memo.spec.delta_stats(plan.index)
                return Cost(cpu_tuples=float(raw.cardinality))
            return ZERO_COST
        if isinstance(plan, DeltaAgg):
            op = self.memo.op(plan.op)
            src = self.memo.node(op.inputs[0]).entry(plan.index).stats
            out = self.memo.node(op.output).entry(plan.index).stats
            return aggregate_cost(src, out, True, self.cfg) + self.delta_plan_cost(plan.input)
        # DeltaJoin
        op = self.memo.op(plan.op)
        info = op.dinfo[plan.index - 1]
        cost = ZERO_COST
        for term_plan, term in zip(plan.terms, info.terms):
            dstats = self.memo.node(term.delta_child).entry(plan.index).stats
            fstats = self.memo.node(term.full_child).stage_stats[term.full_stage]
            cost = cost + join_cost(dstats, fstats, (True, True), self.cfg,
                                    term.stats.cardinality)
            cost = cost + self.delta_plan_cost(term_plan.delta)
            cost = cost + self.full_plan_cost(term_plan.full, plan.index - 1)
            if term.updated:
                old = self.memo.node(term.full_child).stage_stats[plan.index - 1]
                upd = self.memo.node(term.full_child).entry(plan.index).stats
                cost = cost + Cost(cpu_tuples=old.cardinality + upd.cardinality)
                cost = cost + self.delta_plan_cost(term_plan.update_delta)
        if len(info.terms) == 2:
            cost = cost + Cost(cpu_tuples=sum(t.stats.cardinality for t in info.terms))
        return cost

    def _op_exec_cost(self, op, stage: int) -> Cost:
        out = self.memo.node(op.output)
        if op.kind == SCAN_OP:
            return scan_cost(self.memo._leaf_stats.rel_stage[out.relation][stage])
        if op.kind == JOIN_OP:
            a, b = (self.memo.node(i).stage_stats[stage] for i in op.inputs)
            return join_cost(a, b, (True, True), self.cfg,
                             out.stage_stats[stage].cardinality)
        src = self.memo.node(op.inputs[0]).stage_stats[stage]
        return aggregate_cost(src, out.stage_stats[stage], True, self.cfg)

    # ---- spec-surface wrappers returning component costs

    def compcost(self, nid: int, stage: int | None = None) -> tuple[Cost, FullPlan]:
        plan = self.full_plan(nid, stage)
        return self.full_plan_cost(plan, stage), plan

    def diffcost(self, nid: int, index: int) -> tuple[Cost, DeltaPlan]:
        plan = self.delta_plan(nid, index)
        return self.delta_plan_cost(plan), plan
