"""Cardinality/size estimation and the execution cost model.

Cost components are seeks, blocks read, blocks written and tuples touched by
the CPU; a run's weights collapse them to one scalar.  Operators price their
inputs as streams: a non-pipelined input adds its blocks plus one seek (one
sequential run), a pipelined input is free to read.  Joins pick the cheaper of
block-nested-loop and in-memory hash (the latter only when the build side fits
in the buffer); aggregation hashes when its output fits and otherwise spills
one sort pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .config import Config


@dataclass(frozen=True)
class Stats:
    """Estimated logical properties of one (full or differential) result."""

    cardinality: float
    tuple_bytes: float
    blocks: int
    distinct: dict[str, float] = field(default_factory=dict)

    @staticmethod
    def make(cardinality: float, tuple_bytes: float, cfg: Config, distinct=None) -> "Stats":
        cardinality = max(0.0, cardinality)
        distinct = distinct or {}
        capped = {c: min(d, cardinality) if cardinality > 0 else 0.0 for c, d in distinct.items()}
        return Stats(cardinality, tuple_bytes, cfg.blocks(cardinality, tuple_bytes), capped)


@dataclass(frozen=True)
class Cost:
    seeks: float = 0.0
    blocks_read: float = 0.0
    blocks_written: float = 0.0
    cpu_tuples: float = 0.0

    def __add__(self, other: "Cost") -> "Cost":
        return Cost(
            self.seeks + other.seeks,
            self.blocks_read + other.blocks_read,
            self.blocks_written + other.blocks_written,
            self.cpu_tuples + other.cpu_tuples,
        )

    def total(self, cfg: Config) -> float:
        return (
            self.seeks * cfg.w_seek
            + self.blocks_read * cfg.w_read
            + self.blocks_written * cfg.w_write
            + self.cpu_tuples * cfg.w_cpu
        )


ZERO_COST = Cost()

# ----------------------------------------------------------------------------
# property estimation

EQ_RANGE_SELECTIVITY = 1.0 / 3.0  # range predicates: textbook default


def select_selectivity(op: str, distinct: float) -> float:
    if op == "=":
        return 1.0 / max(1.0, distinct)
    return EQ_RANGE_SELECTIVITY


def join_selectivity(distinct_left: float, distinct_right: float) -> float:
    return 1.0 / max(1.0, distinct_left, distinct_right)


def scan_props(cardinality: float, tuple_bytes: float, distinct: dict[str, float],
               selectivities: list[float], cfg: Config) -> Stats:
    card = cardinality
    for sel in selectivities:
        card *= sel
    return Stats.make(card, tuple_bytes, cfg, distinct)


def join_props(left: Stats, right: Stats, pred_selectivities: list[float], cfg: Config) -> Stats:
    """Equijoin output estimate; symmetric in its inputs."""
    card = left.cardinality * right.cardinality
    for sel in pred_selectivities:
        card *= sel
    distinct = dict(left.distinct)
    distinct.update(right.distinct)
    return Stats.make(card, left.tuple_bytes + right.tuple_bytes, cfg, distinct)


def aggregate_props(input_stats: Stats, group_distincts: list[float],
                    n_sum_cols: int, cfg: Config) -> Stats:
    groups = 1.0
    for d in group_distincts:
        groups *= max(1.0, d)
    card = min(groups, input_stats.cardinality)
    if input_stats.cardinality <= 0:
        card = 0.0
    tuple_bytes = 8.0 * (len(group_distincts) + n_sum_cols + 1)
    return Stats.make(card, tuple_bytes, cfg)


def estimate_props(op_kind: str, input_props: list[Stats], cfg: Config, *,
                   pred_columns: list[tuple[str, str]] = (), select_ops: list[tuple[str, str]] = (),
                   group_cols: list[str] = (), n_sum_cols: int = 0) -> Stats:
    """Generic per-operator estimator over input Stats.

    `pred_columns` names the (left column, right column) pairs of an equijoin;
    `select_ops` the (column, op) atoms of a selection.  Used by tests and the
    explain path; annotation computes node properties with the same rules but
    leaf-level distinct counts so that estimates are reassociation-invariant.
    """
    if op_kind == "scan":
        return input_props[0]
    if op_kind == "select":
        src = input_props[0]
        sels = [select_selectivity(op, src.distinct.get(col, src.cardinality))
                for col, op in select_ops]
        return scan_props(src.cardinality, src.tuple_bytes, src.distinct, sels, cfg)
    if op_kind == "join":
        left, right = input_props
        sels = [
            join_selectivity(
                left.distinct.get(lc, right.distinct.get(lc, 1.0)),
                right.distinct.get(rc, left.distinct.get(rc, 1.0)),
            )
            for lc, rc in pred_columns
        ]
        return join_props(left, right, sels, cfg)
    if op_kind == "aggregate":
        src = input_props[0]
        return aggregate_props(src, [src.distinct.get(c, src.cardinality) for c in group_cols],
                               n_sum_cols, cfg)
    raise ValueError(f"unknown operator kind {op_kind!r}")


# ----------------------------------------------------------------------------
# execution costs

def _input_read(stats: Stats, pipelined: bool) -> Cost:
    if pipelined:
        return ZERO_COST
    return Cost(seeks=1, blocks_read=stats.blocks)


def scan_cost(stats: Stats) -> Cost:
    """Read one base relation sequentially."""
    return Cost(seeks=1, blocks_read=stats.blocks, cpu_tuples=stats.cardinality)


def select_cost(input_stats: Stats, pipelined: bool) -> Cost:
    return _input_read(input_stats, pipelined) + Cost(cpu_tuples=input_stats.cardinality)


def union_cost(parts: list[Stats]) -> Cost:
    """Bag union is a concatenation of streams."""
    return Cost(cpu_tuples=sum(p.cardinality for p in parts))


def _bnl_cost(outer: Stats, inner: Stats, pipelined: tuple[bool, bool], cfg: Config,
              out_card: float) -> Cost:
    cost = _input_read(outer, pipelined[0]) + _input_read(inner, pipelined[1])
    avail = cfg.buffer_blocks - 2
    if inner.blocks <= avail:
        # inner cached in memory after its first pass
        cpu = outer.cardinality + inner.cardinality + out_card
        return cost + Cost(cpu_tuples=cpu)
    chunks = max(1, math.ceil(outer.blocks / max(1, avail)))
    extra = Cost(seeks=chunks, blocks_read=(chunks - 1) * inner.blocks)
    if pipelined[1]:
        # a streamed inner must be spilled before it can be rescanned
        extra = extra + Cost(seeks=1, blocks_written=inner.blocks)
    cpu = outer.cardinality + chunks * inner.cardinality + out_card
    return cost + extra + Cost(cpu_tuples=cpu)


def _hash_join_cost(build: Stats, probe: Stats, pipelined: tuple[bool, bool],
                    cfg: Config, out_card: float) -> Cost | None:
    if build.blocks > cfg.buffer_blocks - 1:
        return None
    cost = _input_read(build, pipelined[0]) + _input_read(probe, pipelined[1])
    return cost + Cost(cpu_tuples=build.cardinality + probe.cardinality + out_card)


def join_cost(left: Stats, right: Stats, pipelined: tuple[bool, bool], cfg: Config,
              out_card: float) -> Cost:
    """Cheapest join implementation for the given inputs."""
    candidates = [
        _bnl_cost(left, right, pipelined, cfg, out_card),
        _bnl_cost(right, left, (pipelined[1], pipelined[0]), cfg, out_card),
    ]
    for build, probe, flags in (
        (left, right, pipelined),
        (right, left, (pipelined[1], pipelined[0])),
    ):
        hashed = _hash_join_cost(build, probe, flags, cfg, out_card)
        if hashed is not None:
            candidates.append(hashed)
    return min(candidates, key=lambda c: c.total(cfg))


def aggregate_cost(input_stats: Stats, output_stats: Stats, pipelined: bool,
                   cfg: Config) -> Cost:
    cost = _input_read(input_stats, pipelined) + Cost(cpu_tuples=input_stats.cardinality)
    if output_stats.blocks > cfg.buffer_blocks - 2:
        # groups overflow memory: one sort/spill pass over the input
        cost = cost + Cost(
            seeks=2,
            blocks_read=input_stats.blocks,
            blocks_written=input_stats.blocks,
            cpu_tuples=input_stats.cardinality,
        )
    return cost


def exec_cost(op_kind: str, input_props: list[Stats], pipelined: list[bool], cfg: Config,
              output_props: Stats | None = None) -> Cost:
    """Operator execution cost per the contract: non-pipelined inputs add their
    blocks to blocks_read with one seek per sequential run."""
    if op_kind == "scan":
        return scan_cost(input_props[0])
    if op_kind == "select":
        return select_cost(input_props[0], pipelined[0])
    if op_kind == "join":
        out_card = output_props.cardinality if output_props else 0.0
        return join_cost(input_props[0], input_props[1], (pipelined[0], pipelined[1]),
                         cfg, out_card)
    if op_kind == "aggregate":
        out = output_props or Stats.make(input_props[0].cardinality, 8.0, cfg)
        return aggregate_cost(input_props[0], out, pipelined[0], cfg)
    if op_kind == "union":
        return union_cost(input_props)
    raise ValueError(f"unknown operator kind {op_kind!r}")


def reuse_cost(props: Stats) -> Cost:
    """Read back a stored result: one sequential run."""
    return Cost(seeks=1, blocks_read=props.blocks)


def mat_cost(props: Stats) -> Cost:
    """Write out a computed result: one sequential run."""
    return Cost(seeks=1, blocks_written=props.blocks)


def merge_cost(node_props: Stats, delta_props_all: list[Stats]) -> Cost:
    """Fold differentials into a stored result.

    Each nonempty delta is read, applied tuple-at-a-time (one touched block per
    delta tuple, capped by the stored result's size), and costs CPU per tuple.
    """
    cost = ZERO_COST
    for delta in delta_props_all:
        if delta.cardinality <= 0:
            continue
        touched = min(float(node_props.blocks), delta.cardinality)
        cost = cost + Cost(
            blocks_read=delta.blocks,
            blocks_written=touched,
            cpu_tuples=delta.cardinality,
        )
    return cost
