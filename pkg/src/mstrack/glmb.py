"""Joint prediction/update of one factor of the labeled multi-target density.

Each hypothesis gets a likelihood matrix (tracks x [measurements | missed |
died]); its children are enumerated best-first with Murty's method and the
factor keeps the global best ``K`` children across all parents.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .assignment import Assignment, MurtyIterator
from .core import (
    Detected,
    Factor,
    Hypothesis,
    LabeledTrack,
    Missed,
    TrackLabel,
    normalize,
    push_outcome,
    signature_of,
)
from .kinematics import (
    GaussianDensity,
    Measurement,
    ModeMixture,
    MotionModel,
    SensorModel,
    _innovation,
    default_gate,
    eta_died,
    eta_missed,
    gate_distances,
    lift_measurement,
    log_update,
    predict,
)


def _log(x: float) -> float:
    return math.log(x) if x > 0.0 else -math.inf


@dataclass(frozen=True, eq=False)
class TrackerConfig:
    motion: MotionModel
    sensor: SensorModel
    birth_cov: np.ndarray
    window_n: int = 3
    max_children_per_hypo: int = 10
    max_product_hypos: int = 30
    max_hypos_per_factor: int = 30
    independence_tol: float = 1e-3
    gate_gamma: Optional[float] = None
    empty_factor_tol: float = 1e-4
    birth_prob: float = 0.01
    # False forces one global factor that is never split
    merge_split: bool = True
    # hypotheses whose normalized weight falls below this are dropped
    prune_weight: float = 1e-7

    def __post_init__(self):
        cov = np.asarray(self.birth_cov, dtype=float)
        object.__setattr__(self, "birth_cov", cov)
        if self.gate_gamma is None:
            object.__setattr__(self, "gate_gamma", default_gate(self.sensor.meas_dim))
        for name in ("window_n", "max_children_per_hypo", "max_product_hypos",
                     "max_hypos_per_factor"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.independence_tol <= 0 or self.gate_gamma <= 0 or self.empty_factor_tol < 0:
            raise ValueError("tolerances and gate must be positive")
        if not 0.0 < self.birth_prob < 1.0:
            raise ValueError("birth_prob must lie in (0, 1)")
        if not 0.0 <= self.prune_weight < 1.0:
            raise ValueError("prune_weight must lie in [0, 1)")
        d = self.motion.transition.shape[0]
        if cov.shape != (d, d) or self.sensor.observation.shape[1] != d:
            raise ValueError("state dimensions of motion, sensor and birth_cov disagree")


@dataclass(eq=False)
class LikelihoodMatrix:
    """Clutter-normalized association likelihoods, kept as logs.

    Columns are ``M`` measurements, then the missed block, then the died
    block; both trailing blocks are diagonal.
    """

    track_rows: tuple  # (label, density_index) per row
    meas_cols: tuple  # (MeasurementId, z) per column
    log_entries: np.ndarray
    frame: int
    row_tracks: tuple = ()  # LabeledTrack per row, densities predicted
    posteriors: dict = field(default_factory=dict)  # (row, col) -> (mode, density)

    @property
    def entries(self) -> np.ndarray:
        return np.exp(self.log_entries)

    @property
    def num_meas(self) -> int:
        return len(self.meas_cols)

    @property
    def num_rows(self) -> int:
        return len(self.track_rows)


@dataclass(eq=False)
class ChildCandidate:
    parent_index: int
    assignment: Assignment
    log_weight: float
    hypothesis: Hypothesis

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight)


class _RowCache:
    """Per-update memo of gating and Kalman results, keyed by density object."""

    def __init__(self, meas: Sequence[Measurement], cfg: TrackerConfig):
        self.meas = list(meas)
        self.zs = np.array([np.asarray(m.z, dtype=float) for m in self.meas]).reshape(
            len(self.meas), cfg.sensor.meas_dim)
        self.cfg = cfg
        self._rows: dict = {}
        self._keep: list = []

    def row(self, density: GaussianDensity, survival: float, only_col: Optional[int]):
        key = (id(density), survival, only_col)
        hit = self._rows.get(key)
        if hit is None:
            hit = self._evaluate(density, survival, only_col)
            self._rows[key] = hit
            self._keep.append(density)
        return hit

    def _evaluate(self, g, survival, only_col):
        cfg, s = self.cfg, self.cfg.sensor
        M = len(self.meas)
        logs = np.full(M, -np.inf)
        posts = {}
        if M == 0:
            return logs, posts
        log_scale = _log(survival) + _log(s.detect_prob) - math.log(s.clutter_density)
        if not np.isfinite(log_scale):
            return logs, posts
        inn = _innovation(g, s)
        cols = range(M) if only_col is None else (only_col,)
        d2 = gate_distances(g, s, self.zs[list(cols)], inn)
        for row_k, j in enumerate(cols):
            modes = np.flatnonzero(d2[row_k] <= cfg.gate_gamma)
            if modes.size == 0:
                continue
            comps = []
            for k in modes:
                post, ll = log_update(g, s, self.zs[j], int(k), inn)
                comps.append((int(k), ll, post))
            total = logsumexp([c[1] for c in comps])
            logs[j] = log_scale + total
            if len(comps) == 1:
                posts[j] = (comps[0][0], comps[0][2])
            else:
                mix = ModeMixture(tuple((k, ll - total, p) for k, ll, p in comps))
                posts[j] = (-1, mix)
        return logs, posts


def _birth_column(label: TrackLabel, meas_cols) -> Optional[int]:
    for j, (mid, _) in enumerate(meas_cols):
        if mid.frame == label.birth_frame and mid.index == label.birth_index:
            return j
    return None


def build_likelihood_matrix(h: Hypothesis, births: Sequence[LabeledTrack],
                            meas: Sequence[Measurement], cfg: TrackerConfig,
                            frame: Optional[int] = None,
                            cache: Optional[_RowCache] = None) -> LikelihoodMatrix:
    """Likelihood matrix for one (already predicted) hypothesis plus births.

    Birth candidates behave like tracks whose survival probability is
    ``birth_prob``; a birth may only be detected by the measurement it was
    lifted from and cannot be missed.
    """
    if frame is None:
        if not meas:
            raise ValueError("frame is required when there are no measurements")
        frame = meas[0].id.frame
    cache = cache or _RowCache(meas, cfg)
    s, m = cfg.sensor, cfg.motion
    meas_cols = tuple((mm.id, np.asarray(mm.z, dtype=float)) for mm in meas)
    rows = list(h.tracks) + list(births)
    n, M = len(rows), len(meas_cols)
    L = np.full((n, M + 2 * n), -np.inf)
    posteriors = {}
    for i, t in enumerate(rows):
        birth = i >= len(h.tracks)
        if birth:
            col = _birth_column(t.label, meas_cols)
            if col is not None:
                logs, posts = cache.row(t.density, cfg.birth_prob, col)
                L[i, :M] = logs
                posteriors.update(((i, j), p) for j, p in posts.items())
            L[i, M + n + i] = _log(1.0 - cfg.birth_prob)
        else:
            logs, posts = cache.row(t.density, m.survival_prob, None)
            L[i, :M] = logs
            posteriors.update(((i, j), p) for j, p in posts.items())
            in_fov = s.in_fov(t.density)
            L[i, M + i] = _log(eta_missed(m, s, in_fov))
            L[i, M + n + i] = _log(eta_died(m))
    return LikelihoodMatrix(
        track_rows=tuple((t.label, t.density_index) for t in rows),
        meas_cols=meas_cols,
        log_entries=L,
        frame=frame,
        row_tracks=tuple(rows),
        posteriors=posteriors,
    )


def _child(h: Hypothesis, mat: LikelihoodMatrix, a: Assignment, window_n: int) -> Hypothesis:
    M, n = mat.num_meas, mat.num_rows
    tracks = []
    for i, col in enumerate(a.row_to_col):
        t = mat.row_tracks[i]
        if col < M:
            mode, dens = mat.posteriors[(i, col)]
            mid = mat.meas_cols[col][0]
            if mode > 0:
                mid = mid._replace(mode=mode)
            tracks.append(LabeledTrack(t.label, push_outcome(t.density_index, Detected(mid), window_n), dens))
        elif col < M + n:
            tracks.append(LabeledTrack(t.label, push_outcome(t.density_index, Missed(mat.frame), window_n),
                                       t.density))
    return Hypothesis(h.log_weight - a.cost, tuple(tracks), parents=(h.node,))


def children_of(h: Hypothesis, matrix: LikelihoodMatrix, budget: int, window_n: int = 1,
                parent_index: int = 0) -> Iterator[ChildCandidate]:
    """Children of ``h`` in decreasing weight, at most ``budget`` of them."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if matrix.num_rows == 0:
        a = Assignment((), 0.0)
        yield ChildCandidate(parent_index, a, h.log_weight, _child(h, matrix, a, window_n))
        return
    it = MurtyIterator(-matrix.log_entries)
    for _ in range(budget):
        if not it.has_next():
            return
        a = it.get_next()
        child = _child(h, matrix, a, window_n)
        yield ChildCandidate(parent_index, a, child.log_weight, child)


def select_top_k(parents: Iterable[Iterator[ChildCandidate]], K: int) -> list:
    """Global top ``K`` children across parents via a one-slot-per-parent buffer.

    Each parent's best child goes into the buffer; the best buffered child
    is taken and its slot refilled from the same parent, until ``K`` are
    taken or every parent is exhausted.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    iters = [iter(p) for p in parents]
    tick = itertools.count()
    buf = []
    for pi, it in enumerate(iters):
        c = next(it, None)
        if c is not None:
            heapq.heappush(buf, (-c.log_weight, pi, next(tick), c))
    out = []
    while buf and len(out) < K:
        _, pi, _, c = heapq.heappop(buf)
        out.append(c)
        nxt = next(iters[pi], None)
        if nxt is not None:
            heapq.heappush(buf, (-nxt.log_weight, pi, next(tick), nxt))
    return out


def split_modes(f: Factor) -> Factor:
    """Expand every multi-mode track posterior into one hypothesis per mode."""
    hyps = []
    changed = False
    for h in f.hypotheses:
        mixed = [k for k, t in enumerate(h.tracks) if isinstance(t.density, ModeMixture)]
        if not mixed:
            hyps.append(h)
            continue
        changed = True
        options = [h.tracks[k].density.components for k in mixed]
        for combo in itertools.product(*options):
            tracks = list(h.tracks)
            lw = h.log_weight
            for k, (mode, lw_mode, dens) in zip(mixed, combo):
                t = tracks[k]
                last = t.density_index[-1]
                tagged = Detected(last.meas._replace(mode=mode))
                tracks[k] = LabeledTrack(t.label, t.density_index[:-1] + (tagged,), dens)
                lw += lw_mode
            hyps.append(Hypothesis(lw, tuple(tracks), node=h.node, parents=h.parents))
    return Factor(f.id, tuple(hyps)) if changed else f


def marginalize_history(f: Factor) -> Factor:
    """Collapse hypotheses with equal signatures, summing their weights.

    The first hypothesis of each group is kept as the representative.
    """
    groups: dict = {}
    for h in f.hypotheses:
        groups.setdefault(signature_of(h), []).append(h)
    if len(groups) == len(f.hypotheses):
        return f
    hyps = []
    for members in groups.values():
        head = members[0]
        if len(members) == 1:
            hyps.append(head)
            continue
        lw = float(logsumexp([h.log_weight for h in members]))
        parents = tuple(dict.fromkeys(p for h in members for p in h.parents))
        hyps.append(Hypothesis(lw, head.tracks, node=head.node, parents=parents))
    return Factor(f.id, tuple(hyps))


def make_birth_candidates(meas: Sequence[Measurement], frame: int,
                          cfg: TrackerConfig) -> list:
    """One zero-velocity birth candidate per measurement, labeled (frame, index)."""
    return [
        LabeledTrack(TrackLabel(frame, mm.id.index), (),
                     lift_measurement(cfg.sensor, mm.z, cfg.birth_cov))
        for mm in meas
    ]


def update_factor(f: Factor, meas: Sequence[Measurement], births: Sequence[LabeledTrack],
                  cfg: TrackerConfig, frame: Optional[int] = None) -> Factor:
    """Predict and update every hypothesis of ``f``; keep the best children.

    With no measurements and no births this is the missed-detection
    ("negative information") update.  Raises ``AllWeightsZero`` when no
    child keeps positive weight.
    """
    if frame is None:
        if not meas:
            raise ValueError("frame is required when there are no measurements")
        frame = meas[0].id.frame
    cache = _RowCache(meas, cfg)
    predicted: dict = {}

    def _pred(g):
        hit = predicted.get(id(g))
        if hit is None:
            hit = (g, predict(g, cfg.motion))
            predicted[id(g)] = hit
        return hit[1]

    iters = []
    for pi, h in enumerate(f.hypotheses):
        ph = Hypothesis(h.log_weight,
                        tuple(LabeledTrack(t.label, t.density_index, _pred(t.density))
                              for t in h.tracks),
                        node=h.node)
        mat = build_likelihood_matrix(ph, births, meas, cfg, frame=frame, cache=cache)
        iters.append(children_of(ph, mat, cfg.max_children_per_hypo, cfg.window_n,
                                 parent_index=pi))
    chosen = select_top_k(iters, cfg.max_hypos_per_factor)
    out = Factor(f.id, tuple(c.hypothesis for c in chosen if c.log_weight > -math.inf))
    out = normalize(marginalize_history(split_modes(out)))
    return prune(out, cfg.prune_weight)


def prune(f: Factor, min_weight: float) -> Factor:
    """Drop hypotheses lighter than ``min_weight`` (of a normalized factor) and renormalize."""
    if min_weight <= 0.0:
        return f
    floor = math.log(min_weight)
    keep = tuple(h for h in f.hypotheses if h.log_weight >= floor)
    if len(keep) == len(f.hypotheses):
        return f
    return normalize(Factor(f.id, keep))
