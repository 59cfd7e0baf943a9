"""Auction instances and the ``cal-1`` JSON instance file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import InputError
from .valuations import Valuation, valuation_from_json, zero_valuation

SCHEMA = "cal-1"


@dataclass(frozen=True)
class Instance:
    valuations: tuple[Valuation, ...]
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        vals = tuple(self.valuations)
        object.__setattr__(self, "valuations", vals)
        if not vals:
            raise InputError("an instance needs at least one player")
        ms = {v.m for v in vals}
        if len(ms) != 1:
            raise InputError(f"valuations disagree on the item count: {sorted(ms)}")

    @property
    def n(self) -> int:
        return len(self.valuations)

    @property
    def m(self) -> int:
        return self.valuations[0].m

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.m)

    @property
    def is_mrs(self) -> bool:
        return all(v.is_mrs for v in self.valuations)

    def total_grand_value(self) -> float:
        """sum_i v_i([m]), an upper bound on every welfare quantity."""
        return float(sum(v.grand_value for v in self.valuations))

    def with_valuation(self, i: int, v: Valuation) -> "Instance":
        vals = list(self.valuations)
        vals[i] = v
        return Instance(tuple(vals), dict(self.metadata))

    def zeroed(self, i: int) -> "Instance":
        return self.with_valuation(i, zero_valuation(self.m))

    def welfare(self, bundles: Sequence[Sequence[int]]) -> float:
        return float(sum(v.value(S) for v, S in zip(self.valuations, bundles)))

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "n": self.n,
            "m": self.m,
            "valuations": [v.to_json() for v in self.valuations],
            "metadata": self.metadata,
        }


def instance_from_json(d: dict) -> Instance:
    if not isinstance(d, dict):
        raise InputError("instance file must hold a JSON object")
    if d.get("schema", SCHEMA) != SCHEMA:
        raise InputError(f"unsupported schema {d.get('schema')!r}")
    try:
        n, m = int(d["n"]), int(d["m"])
        raw = d["valuations"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"instance file is missing a field: {exc}") from exc
    if len(raw) != n:
        raise InputError(f"expected {n} valuations, found {len(raw)}")
    vals = tuple(valuation_from_json(v, m) for v in raw)
    if any(v.m != m for v in vals):
        raise InputError("a valuation's item count does not match m")
    return Instance(vals, dict(d.get("metadata") or {}))


def dumps(inst: Instance) -> str:
    return json.dumps(inst.to_json(), indent=2, sort_keys=True) + "\n"


def load(path: str | Path) -> Instance:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    return instance_from_json(data)


def save(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps(inst))
