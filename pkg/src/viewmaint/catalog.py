"""Base-relation metadata, statistics, foreign keys and the batch-update spec.

Updates are propagated one relation and one kind at a time, in catalog order:
inserts to the i-th relation carry update index 2i-1, deletes index 2i, so a
catalog of n relations yields the fixed update sequence 1..2n.  Index 0 is
reserved for full (non-differential) results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .config import COLUMN_TYPES, Config
from .errors import ParseError, ValidationError

INSERT = "insert"
DELETE = "delete"


@dataclass(frozen=True)
class RelationInfo:
    name: str
    columns: tuple[tuple[str, str], ...]  # (column name, type)
    cardinality: int
    tuple_bytes: int
    distinct: dict[str, int] = field(default_factory=dict)
    primary_key: tuple[str, ...] = ()

    def column_names(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.columns)

    def column_type(self, column: str) -> str:
        for name, typ in self.columns:
            if name == column:
                return typ
        raise KeyError(column)

    def distinct_of(self, column: str) -> int:
        return self.distinct.get(column, max(1, self.cardinality))

    def blocks(self, cfg: Config) -> int:
        return cfg.blocks(self.cardinality, self.tuple_bytes)

    def validate(self) -> None:
        if not self.columns:
            raise ValidationError(f"relation {self.name} has no columns")
        names = self.column_names()
        if len(set(names)) != len(names):
            raise ValidationError(f"relation {self.name} has duplicate columns")
        for _, typ in self.columns:
            if typ not in COLUMN_TYPES:
                raise ValidationError(f"relation {self.name}: bad column type {typ!r}")
        if self.cardinality < 0:
            raise ValidationError(f"relation {self.name}: negative cardinality")
        if self.tuple_bytes <= 0:
            raise ValidationError(f"relation {self.name}: tuple_bytes must be positive")
        for col, d in self.distinct.items():
            if col not in names:
                raise ValidationError(f"relation {self.name}: distinct for unknown column {col}")
            if d < 1:
                raise ValidationError(f"relation {self.name}.{col}: distinct must be >= 1")
            if self.cardinality > 0 and d > self.cardinality:
                raise ValidationError(
                    f"relation {self.name}.{col}: distinct {d} exceeds cardinality {self.cardinality}"
                )
        for col in self.primary_key:
            if col not in names:
                raise ValidationError(f"relation {self.name}: primary key column {col} unknown")


@dataclass(frozen=True)
class ForeignKey:
    from_rel: str
    from_cols: tuple[str, ...]
    to_rel: str
    to_cols: tuple[str, ...]


@dataclass(frozen=True)
class DeltaStats:
    """Size and per-column distinct estimate of one delta relation."""

    relation: str
    kind: str  # INSERT or DELETE
    cardinality: int
    distinct: dict[str, int]


class Catalog:
    """Immutable after construction; relation order fixes the update numbering."""

    def __init__(self, relations: list[RelationInfo], foreign_keys: list[ForeignKey] = ()):
        self.relations: dict[str, RelationInfo] = {}
        for rel in relations:
            if rel.name in self.relations:
                raise ValidationError(f"duplicate relation {rel.name}")
            self.relations[rel.name] = rel
        self.foreign_keys: tuple[ForeignKey, ...] = tuple(foreign_keys)
        self._order = tuple(self.relations)
        self.validate()

    def __contains__(self, name: str) -> bool:
        return name in self.relations

    def __getitem__(self, name: str) -> RelationInfo:
        return self.relations[name]

    def names(self) -> tuple[str, ...]:
        return self._order

    def position(self, name: str) -> int:
        """1-based position of a relation in the update ordering."""
        return self._order.index(name) + 1

    def validate(self) -> None:
        for rel in self.relations.values():
            rel.validate()
        for fk in self.foreign_keys:
            if fk.from_rel not in self.relations:
                raise ValidationError(f"foreign key from unknown relation {fk.from_rel}")
            if fk.to_rel not in self.relations:
                raise ValidationError(f"foreign key into unknown relation {fk.to_rel}")
            if len(fk.from_cols) != len(fk.to_cols):
                raise ValidationError(
                    f"foreign key {fk.from_rel}->{fk.to_rel}: column lists differ in length"
                )
            src, dst = self.relations[fk.from_rel], self.relations[fk.to_rel]
            if tuple(fk.to_cols) != dst.primary_key:
                raise ValidationError(
                    f"foreign key {fk.from_rel}->{fk.to_rel} must reference the primary key"
                )
            for a, b in zip(fk.from_cols, fk.to_cols):
                if a not in src.column_names():
                    raise ValidationError(f"foreign key column {fk.from_rel}.{a} unknown")
                if src.column_type(a) != dst.column_type(b):
                    raise ValidationError(
                        f"foreign key {fk.from_rel}.{a} -> {fk.to_rel}.{b}: type mismatch"
                    )

    def to_json(self) -> dict:
        return {
            "relations": [
                {
                    "name": r.name,
                    "columns": [[c, t] for c, t in r.columns],
                    "cardinality": r.cardinality,
                    "tuple_bytes": r.tuple_bytes,
                    "distinct": dict(sorted(r.distinct.items())),
                    "primary_key": list(r.primary_key),
                }
                for r in self.relations.values()
            ],
            "foreign_keys": [
                {
                    "from_rel": fk.from_rel,
                    "from_cols": list(fk.from_cols),
                    "to_rel": fk.to_rel,
                    "to_cols": list(fk.to_cols),
                }
                for fk in self.foreign_keys
            ],
        }

    @staticmethod
    def from_json(raw: dict) -> "Catalog":
        try:
            relations = [
                RelationInfo(
                    name=r["name"],
                    columns=tuple((c, t) for c, t in r["columns"]),
                    cardinality=int(r["cardinality"]),
                    tuple_bytes=int(r["tuple_bytes"]),
                    distinct={k: int(v) for k, v in r.get("distinct", {}).items()},
                    primary_key=tuple(r.get("primary_key", ())),
                )
                for r in raw["relations"]
            ]
            fks = [
                ForeignKey(
                    from_rel=f["from_rel"],
                    from_cols=tuple(f["from_cols"]),
                    to_rel=f["to_rel"],
                    to_cols=tuple(f["to_cols"]),
                )
                for f in raw.get("foreign_keys", ())
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed catalog: {exc}") from exc
        return Catalog(relations, fks)


def load_catalog(path: str) -> Catalog:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"catalog {path}: {exc}") from exc
    return Catalog.from_json(raw)


def save_catalog(catalog: Catalog, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(catalog.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def delta_cardinality(base_cardinality: int, fraction: float) -> int:
    return int(round(base_cardinality * fraction))


class UpdateSpec:
    """Per-relation insert/delete fractions plus the implied update numbering."""

    def __init__(self, catalog: Catalog, fractions: dict[str, tuple[float, float]]):
        self.catalog = catalog
        self.fractions: dict[str, tuple[float, float]] = {}
        for name in catalog.names():
            f_plus, f_minus = fractions.get(name, (0.0, 0.0))
            if f_plus < 0:
                raise ValidationError(f"{name}: insert fraction must be nonnegative")
            if not 0 <= f_minus <= 1:
                raise ValidationError(f"{name}: delete fraction must be in [0, 1]")
            self.fractions[name] = (f_plus, f_minus)
        self.n = len(catalog.names())

    @property
    def n_updates(self) -> int:
        return 2 * self.n

    def index_for(self, relation: str, kind: str) -> int:
        i = self.catalog.position(relation)
        return 2 * i - 1 if kind == INSERT else 2 * i

    def relation_at(self, index: int) -> str:
        if not 1 <= index <= self.n_updates:
            raise ValueError(f"update index {index} out of range 1..{self.n_updates}")
        return self.catalog.names()[(index - 1) // 2]

    def kind_at(self, index: int) -> str:
        return INSERT if index % 2 == 1 else DELETE

    def delta_stats(self, index: int) -> DeltaStats:
        rel = self.catalog[self.relation_at(index)]
        kind = self.kind_at(index)
        f_plus, f_minus = self.fractions[rel.name]
        card = delta_cardinality(rel.cardinality, f_plus if kind == INSERT else f_minus)
        distinct = {c: min(rel.distinct_of(c), card) if card else 0 for c in rel.column_names()}
        return DeltaStats(rel.name, kind, card, distinct)

    def staged_cardinality(self, relation: str, stage: int) -> int:
        """Tuple count of a base relation after updates 1..stage have been applied."""
        rel = self.catalog[relation]
        pos = self.catalog.position(relation)
        card = rel.cardinality
        if stage >= 2 * pos - 1:
            card += self.delta_stats(2 * pos - 1).cardinality
        if stage >= 2 * pos:
            card -= self.delta_stats(2 * pos).cardinality
        return card


def make_update_spec(catalog: Catalog, update_pct: float) -> UpdateSpec:
    """Uniform batch: inserting update_pct% as many tuples as stored, deleting half that."""
    if not 0 <= update_pct <= 100:
        raise ValidationError("update_pct must be in [0, 100]")
    frac = update_pct / 100.0
    return UpdateSpec(catalog, {name: (frac, frac / 2.0) for name in catalog.names()})


def load_update_spec(catalog: Catalog, path: str) -> UpdateSpec:
    """Per-relation JSON override: {"R": {"insert_fraction": .., "delete_fraction": ..}}."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"update spec {path}: {exc}") from exc
    fractions = {}
    for name, entry in raw.items():
        if name not in catalog:
            raise ValidationError(f"update spec names unknown relation {name}")
        fractions[name] = (
            float(entry.get("insert_fraction", 0.0)),
            float(entry.get("delete_fraction", 0.0)),
        )
    return UpdateSpec(catalog, fractions)
