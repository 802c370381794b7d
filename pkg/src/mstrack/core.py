"""Labels, density indices, hypotheses and factors.

Hypothesis weights are carried as natural logs throughout; ``weight`` is a
convenience view.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, NamedTuple, Union

import numpy as np
from scipy.special import logsumexp

from .exceptions import AllWeightsZero

if TYPE_CHECKING:
    from .glmb import TrackerConfig


class TrackLabel(NamedTuple):
    birth_frame: int
    birth_index: int

    def __str__(self):
        return f"{self.birth_frame}:{self.birth_index}"


class MeasurementId(NamedTuple):
    frame: int
    index: int
    mode: int = 0

    def __str__(self):
        s = f"{self.frame}:{self.index}"
        return s if self.mode == 0 else f"{s}~{self.mode}"


class Detected(NamedTuple):
    meas: MeasurementId

    def __str__(self):
        return str(self.meas)


class Missed(NamedTuple):
    frame: int

    def __str__(self):
        return f"{self.frame}:x"


AssocOutcome = Union[Detected, Missed]
DensityIndex = tuple  # tuple[AssocOutcome, ...], oldest first


def push_outcome(d: DensityIndex, o: AssocOutcome, N: int) -> DensityIndex:
    """Append ``o`` and keep only the newest ``N`` outcomes."""
    if N < 1:
        raise ValueError("window size must be at least 1")
    return (*d, o)[-N:]


class LabeledTrack(NamedTuple):
    label: TrackLabel
    density_index: DensityIndex
    density: object  # GaussianDensity, or ModeMixture until split_modes runs


@dataclass(frozen=True, eq=False)
class Hypothesis:
    log_weight: float
    tracks: tuple = ()
    # pedigree bookkeeping
    node: int = 0
    parents: tuple = ()

    def __post_init__(self):
        tracks = tuple(self.tracks)
        labels = [t.label for t in tracks]
        if any(a >= b for a, b in zip(labels, labels[1:])):
            tracks = tuple(sorted(tracks, key=lambda t: t.label))
            labels = [t.label for t in tracks]
            if len(set(labels)) != len(labels):
                raise ValueError("duplicate track label within a hypothesis")
        object.__setattr__(self, "tracks", tracks)

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)

    @property
    def labels(self) -> tuple:
        return tuple(t.label for t in self.tracks)


HypoSignature = tuple  # tuple[(TrackLabel, DensityIndex), ...]


def signature_of(h: Hypothesis) -> HypoSignature:
    return tuple((t.label, t.density_index) for t in h.tracks)


@dataclass(frozen=True, eq=False)
class Factor:
    id: int
    hypotheses: tuple
    label_set: frozenset = field(init=False)

    def __post_init__(self):
        hyps = tuple(self.hypotheses)
        object.__setattr__(self, "hypotheses", hyps)
        object.__setattr__(self, "label_set",
                           frozenset(t.label for h in hyps for t in h.tracks))

    @property
    def log_weights(self) -> np.ndarray:
        return np.array([h.log_weight for h in self.hypotheses], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def __len__(self):
        return len(self.hypotheses)

    def prob_nonempty(self) -> float:
        lw = [h.log_weight for h in self.hypotheses if h.tracks]
        if not lw:
            return 0.0
        total = logsumexp(self.log_weights)
        return float(np.exp(logsumexp(lw) - total)) if np.isfinite(total) else 0.0

    def map_hypothesis(self) -> Hypothesis:
        return max(self.hypotheses, key=lambda h: h.log_weight)


def log_normalize(log_w: Iterable[float]) -> np.ndarray:
    lw = np.asarray(list(log_w), dtype=float)
    if lw.size == 0:
        raise AllWeightsZero("no hypotheses")
    total = logsumexp(lw)
    if not np.isfinite(total):
        raise AllWeightsZero("all hypothesis weights are zero")
    return lw - total


def normalize(f: Factor) -> Factor:
    """Rescale weights to sum to one, working in the log domain."""
    lw = log_normalize(h.log_weight for h in f.hypotheses)
    hyps = tuple(replace(h, log_weight=float(w)) for h, w in zip(f.hypotheses, lw))
    return Factor(f.id, hyps)


@dataclass
class FilterState:
    factors: dict  # factor id -> Factor, insertion ordered
    next_factor_id: int
    frame: int
    config: "TrackerConfig"

    @classmethod
    def initial(cls, config: "TrackerConfig", frame: int = 0) -> "FilterState":
        return cls({}, 0, frame, config)

    def take_id(self) -> int:
        fid = self.next_factor_id
        self.next_factor_id += 1
        return fid

    def labels_disjoint(self) -> bool:
        seen = set()
        for f in self.factors.values():
            if seen & f.label_set:
                return False
            seen |= f.label_set
        return True

    def total_hypotheses(self) -> int:
        return sum(len(f) for f in self.factors.values())
