"""Structured records of factor life-cycle and hypothesis pedigree."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

from .core import Factor, Hypothesis

# weight-label prefixes used when drawing the pedigree tree
KIND_PREFIX = {
    "child": "",
    "merged": "-1",
    "split_with_meas": "-2",
    "split_without_meas": "-3",
}


@dataclass(frozen=True)
class PedigreeEvent:
    frame: int
    node: int
    parents: tuple
    kind: str
    weight: float
    track_assoc: tuple
    factor: int = -1

    @property
    def weight_label(self) -> str:
        prefix = KIND_PREFIX[self.kind]
        w = f"{self.weight:.3g}"
        return f"{prefix}:{w}" if prefix else w


@dataclass(frozen=True)
class FactorEvent:
    frame: int
    kind: str  # created | merged | split | deleted
    factors: tuple  # resulting (or deleted) factor ids
    sources: tuple = ()  # factor ids consumed by the event
    epsilon: Optional[float] = None
    labels: tuple = ()  # label set of each resulting factor
    source_labels: frozenset = frozenset()


def track_assoc(h: Hypothesis) -> tuple:
    """``trackID.measurementID`` strings for the newest outcome of each track."""
    out = []
    for t in h.tracks:
        last = str(t.density_index[-1]) if t.density_index else "-"
        out.append(f"{t.label}.{last}")
    return tuple(out)


class EventLog:
    """Collects factor events; with ``pedigree=True`` also numbers hypotheses.

    Node 0 is the virtual root: hypotheses with no recorded parent hang
    off it.
    """

    def __init__(self, pedigree: bool = False):
        self.pedigree = pedigree
        self.factor_events: list = []
        self.hypo_events: list = []
        self._nodes = itertools.count(1)

    def factor_event(self, frame: int, kind: str, factors, sources=(), epsilon=None,
                     labels=(), source_labels=frozenset()) -> None:
        self.factor_events.append(FactorEvent(frame, kind, tuple(factors), tuple(sources), epsilon,
                                              tuple(labels), frozenset(source_labels)))

    def count(self, kind: str) -> int:
        return sum(1 for e in self.factor_events if e.kind == kind)

    def tag(self, f: Factor, kind: str, frame: int) -> Factor:
        """Give every hypothesis of ``f`` a fresh node id and record it."""
        if not self.pedigree:
            return f
        hyps = []
        for h in f.hypotheses:
            node = next(self._nodes)
            parents = tuple(p for p in h.parents) or (0,)
            self.hypo_events.append(PedigreeEvent(frame, node, parents, kind, h.weight,
                                                  track_assoc(h), f.id))
            hyps.append(replace(h, node=node, parents=()))
        return Factor(f.id, tuple(hyps))
