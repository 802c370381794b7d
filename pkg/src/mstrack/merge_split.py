"""Per-frame driver: clustering, factor merging, independence test, splitting.

The filtering density is a product of factors with disjoint label sets.
Measurements that couple several factors force those factors to be merged
into product hypotheses; a merged factor is split again when the tracks
that gate the new measurements are (numerically) independent of the rest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .assignment import k_min_sum
from .core import Factor, FilterState, Hypothesis, LabeledTrack, normalize
from .events import EventLog
from .exceptions import AllWeightsZero, LabelCollision
from .glmb import TrackerConfig, make_birth_candidates, update_factor
from .kinematics import Measurement, _innovation, gate_distances, predict


@dataclass(eq=False)
class GateMatrix:
    """Measurement rows against (track label columns | measurement columns)."""

    meas_ids: tuple
    track_labels: tuple
    track_gate: np.ndarray  # (M, L) bool
    meas_gate: np.ndarray  # (M, M) bool

    def labels_gating(self, meas_ids) -> frozenset:
        rows = [i for i, mid in enumerate(self.meas_ids) if mid in meas_ids]
        if not rows or not self.track_labels:
            return frozenset()
        hit = self.track_gate[rows].any(axis=0)
        return frozenset(l for l, g in zip(self.track_labels, hit) if g)


@dataclass(frozen=True)
class Cluster:
    measurement_ids: frozenset
    track_labels: frozenset


@dataclass(frozen=True)
class SuperGroup:
    factor_ids: frozenset
    cluster_ids: frozenset


@dataclass(eq=False)
class JointTable:
    row_labels: tuple  # gated-side subhypothesis signatures
    col_labels: tuple  # non-gated-side signatures
    P: np.ndarray
    row_tracks: tuple = ()
    col_tracks: tuple = ()
    row_parents: tuple = ()
    col_parents: tuple = ()
    gated_labels: frozenset = field(default_factory=frozenset)
    nongated_labels: frozenset = field(default_factory=frozenset)


def birth_gate_radius(cfg: TrackerConfig) -> float:
    """Distance within which two measurements could stem from one new track."""
    s = cfg.sensor
    S = s.noise + s.observation @ cfg.birth_cov @ s.observation.T
    return 2.0 * math.sqrt(cfg.gate_gamma * float(np.linalg.eigvalsh(S).max()))


def build_gate_matrix(factors: Sequence[Factor], meas: Sequence[Measurement],
                      cfg: TrackerConfig) -> GateMatrix:
    """Gate every live track density, after prediction, against every measurement.

    A label gates a measurement if any of its densities (in any hypothesis)
    does.
    """
    labels = sorted({l for f in factors for l in f.label_set})
    col = {l: k for k, l in enumerate(labels)}
    M = len(meas)
    track_gate = np.zeros((M, len(labels)), dtype=bool)
    if M:
        zs = np.array([np.asarray(m.z, dtype=float) for m in meas]).reshape(M, -1)
        seen = set()
        for f in factors:
            for h in f.hypotheses:
                for t in h.tracks:
                    key = (id(t.density), t.label)
                    if key in seen:
                        continue
                    seen.add(key)
                    g = predict(t.density, cfg.motion)
                    d2 = gate_distances(g, cfg.sensor, zs, _innovation(g, cfg.sensor))
                    track_gate[:, col[t.label]] |= d2.min(axis=1) <= cfg.gate_gamma
        Z = zs
        dist = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
        meas_gate = dist <= birth_gate_radius(cfg)
    else:
        meas_gate = np.zeros((0, 0), dtype=bool)
    return GateMatrix(tuple(m.id for m in meas), tuple(labels), track_gate, meas_gate)


def _components(n: int, edges_i, edges_j) -> np.ndarray:
    graph = coo_matrix((np.ones(len(edges_i)), (edges_i, edges_j)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    return comp


def cluster_stage1(state: FilterState, meas: Sequence[Measurement],
                   gm: Optional[GateMatrix] = None) -> list:
    """Connected components of the measurement/track gating graph.

    Tracks that gate nothing come back as single-track clusters.
    """
    if gm is None:
        gm = build_gate_matrix(list(state.factors.values()), meas, state.config)
    M, L = len(gm.meas_ids), len(gm.track_labels)
    ti, tj = np.nonzero(gm.track_gate)
    mi, mj = np.nonzero(gm.meas_gate)
    comp = _components(M + L, np.r_[ti, mi], np.r_[tj + M, mj])
    members: dict = {}
    for node in range(M + L):
        members.setdefault(comp[node], []).append(node)
    clusters = []
    for nodes in sorted(members.values(), key=min):
        clusters.append(Cluster(
            frozenset(gm.meas_ids[k] for k in nodes if k < M),
            frozenset(gm.track_labels[k - M] for k in nodes if k >= M),
        ))
    return clusters


def cluster_stage2(factors: Sequence[Factor], clusters: Sequence[Cluster]) -> list:
    """Super groups: components of the factor x measurement-cluster incidence.

    Clusters without measurements are ignored; factors touching no cluster
    form super groups on their own.
    """
    F = len(factors)
    live = [k for k, c in enumerate(clusters) if c.measurement_ids]
    ei, ej = [], []
    for a, f in enumerate(factors):
        for b, k in enumerate(live):
            if f.label_set & clusters[k].track_labels:
                ei.append(a)
                ej.append(F + b)
    comp = _components(F + len(live), ei, ej)
    members: dict = {}
    for node in range(F + len(live)):
        members.setdefault(comp[node], []).append(node)
    groups = []
    for nodes in sorted(members.values(), key=min):
        groups.append(SuperGroup(
            frozenset(factors[k].id for k in nodes if k < F),
            frozenset(live[k - F] for k in nodes if k >= F),
        ))
    return groups


def merge_factors(fs: Sequence[Factor], cap: int, new_id: int = -1) -> Factor:
    """Merge factors into the ``cap`` heaviest product hypotheses."""
    if len(fs) < 2:
        raise ValueError("merging needs at least two factors")
    seen: set = set()
    for f in fs:
        if seen & f.label_set:
            raise LabelCollision(f"factor {f.id} shares labels with another merged factor")
        seen |= f.label_set
    arrays = [-f.log_weights for f in fs]
    hyps = []
    for sel in k_min_sum(arrays, cap):
        picked = [f.hypotheses[i] for f, i in zip(fs, sel.indices)]
        tracks = tuple(t for h in picked for t in h.tracks)
        hyps.append(Hypothesis(-sel.sum, tracks, parents=tuple(h.node for h in picked)))
    return normalize(Factor(new_id, tuple(hyps)))


def partition_gated(f: Factor, meas_in_group, gm: GateMatrix) -> tuple:
    gated = gm.labels_gating(set(meas_in_group)) & f.label_set
    return frozenset(gated), frozenset(f.label_set - gated)


def build_joint_table(f: Factor, gated_labels, nongated_labels) -> JointTable:
    """Joint weight table of gated-side vs non-gated-side subhypotheses."""
    gated_labels = frozenset(gated_labels)
    rows: dict = {}
    cols: dict = {}
    row_tracks, col_tracks, row_par, col_par = [], [], [], []
    cells = []
    for h in f.hypotheses:
        g = tuple(t for t in h.tracks if t.label in gated_labels)
        ng = tuple(t for t in h.tracks if t.label not in gated_labels)
        gs = tuple((t.label, t.density_index) for t in g)
        ns = tuple((t.label, t.density_index) for t in ng)
        if gs not in rows:
            rows[gs] = len(rows)
            row_tracks.append(g)
            row_par.append([])
        if ns not in cols:
            cols[ns] = len(cols)
            col_tracks.append(ng)
            col_par.append([])
        i, j = rows[gs], cols[ns]
        row_par[i].append(h.node)
        col_par[j].append(h.node)
        cells.append((i, j, h.log_weight))
    P = np.zeros((len(rows), len(cols)))
    for i, j, lw in cells:
        P[i, j] += math.exp(lw)
    return JointTable(
        tuple(rows), tuple(cols), P, tuple(row_tracks), tuple(col_tracks),
        tuple(tuple(dict.fromkeys(p)) for p in row_par),
        tuple(tuple(dict.fromkeys(p)) for p in col_par),
        gated_labels, frozenset(nongated_labels),
    )


def independence_epsilon(t: JointTable) -> float:
    """Largest gap between the joint table and the product of its marginals."""
    P = t.P
    return float(np.max(np.abs(P - np.outer(P.sum(axis=1), P.sum(axis=0)))))


def split_factor(f: Factor, t: JointTable, new_ids: tuple = (-1, -1)) -> tuple:
    """Replace ``f`` by its gated-side and non-gated-side marginal factors."""
    Pi, Pj = t.P.sum(axis=1), t.P.sum(axis=0)

    def _side(fid, tracks, marg, parents):
        hyps = tuple(Hypothesis(math.log(w), tr, parents=par)
                     for tr, w, par in zip(tracks, marg, parents) if w > 0.0)
        return normalize(Factor(fid, hyps))

    return (_side(new_ids[0], t.row_tracks, Pi, t.row_parents),
            _side(new_ids[1], t.col_tracks, Pj, t.col_parents))


def _is_empty(f: Factor, tol: float) -> bool:
    p = f.prob_nonempty()
    return p == 0.0 or p < tol


def delete_empty(state: FilterState) -> FilterState:
    """Drop factors whose probability of holding any track is below tolerance."""
    tol = state.config.empty_factor_tol
    kept = {}
    for fid, f in state.factors.items():
        try:
            if _is_empty(f, tol):
                continue
        except AllWeightsZero:
            continue
        kept[fid] = f
    return FilterState(kept, state.next_factor_id, state.frame, state.config)


def estimates(state: FilterState) -> list:
    """``(label, mean)`` for every track of each factor's heaviest hypothesis."""
    out = []
    for f in state.factors.values():
        for t in f.map_hypothesis().tracks:
            out.append((t.label, t.density.mean))
    out.sort(key=lambda x: x[0])
    return out


class _FrameRun:
    def __init__(self, state: FilterState, frame: int, log: Optional[EventLog]):
        self.st = FilterState(dict(state.factors), state.next_factor_id, frame, state.config)
        self.cfg = state.config
        self.frame = frame
        self.log = log
        self.out: dict = {}

    def event(self, kind, factors, sources=(), epsilon=None, labels=(), source_labels=()):
        if self.log is not None:
            self.log.factor_event(self.frame, kind, factors, sources, epsilon, labels, source_labels)

    def tag(self, f: Factor, kind: str) -> Factor:
        return self.log.tag(f, kind, self.frame) if self.log is not None else f

    def update(self, f: Factor, meas, births) -> None:
        try:
            g = update_factor(f, meas, births, self.cfg, frame=self.frame)
        except AllWeightsZero:
            self.event("deleted", (f.id,))
            return
        self.out[g.id] = self.tag(g, "child")

    def try_split(self, f: Factor, meas_ids, gm: GateMatrix) -> Optional[tuple]:
        """Split ``f`` into the labels gating ``meas_ids`` and the rest, if independent."""
        gated, nongated = partition_gated(f, meas_ids, gm)
        if not gated or not nongated:
            return None
        table = build_joint_table(f, gated, nongated)
        eps = independence_epsilon(table)
        if eps > self.cfg.independence_tol:
            return None
        fg, fn = split_factor(f, table, (self.st.take_id(), self.st.take_id()))
        self.event("split", (fg.id, fn.id), (f.id,), eps, (fg.label_set, fn.label_set),
                   f.label_set)
        return fg, fn

    def group(self, fs: list, meas: list, parts: list, gm: GateMatrix) -> None:
        """Handle one super group; ``parts`` holds each cluster's measurement ids."""
        births = make_birth_candidates(meas, self.frame, self.cfg)
        if not self.cfg.merge_split and len(fs) > 1:
            fs = [self.merge(fs)]
        if not meas:
            for f in fs:
                self.update(f, [], [])
            return
        if not fs:
            empty = Factor(self.st.take_id(), (Hypothesis(0.0, ()),))
            self.event("created", (empty.id,), labels=(frozenset(),))
            self.update(empty, meas, births)
            return
        target = fs[0] if len(fs) == 1 else self.merge(fs)
        if not self.cfg.merge_split:
            self.update(target, meas, births)
            return
        # Tracks gating none of the group's measurements split off and get
        # negative information.
        split = self.try_split(target, {m.id for m in meas}, gm)
        if split is not None:
            fg, fn = split
            self.update(self.tag(fg, "split_with_meas"), meas, births)
            self.update(self.tag(fn, "split_without_meas"), [], [])
            return
        # Otherwise, when the measurements fall into separate clusters, try
        # to split one cluster's tracks off; both sides keep their own
        # measurements.
        if len(parts) > 1:
            for part in parts:
                split = self.try_split(target, part, gm)
                if split is not None:
                    fg, fn = split
                    inside = [m for m in meas if m.id in part]
                    outside = [m for m in meas if m.id not in part]
                    self.update(self.tag(fg, "split_with_meas"), inside,
                                [b for b in births if _born_from(b, part)])
                    self.update(self.tag(fn, "split_with_meas"), outside,
                                [b for b in births if not _born_from(b, part)])
                    return
        self.update(target, meas, births)

    def merge(self, fs: list) -> Factor:
        merged = merge_factors(fs, self.cfg.max_product_hypos, self.st.take_id())
        self.event("merged", (merged.id,), tuple(f.id for f in fs), labels=(merged.label_set,),
                   source_labels=frozenset().union(*(f.label_set for f in fs)))
        return self.tag(merged, "merged")


def _born_from(b: LabeledTrack, meas_ids) -> bool:
    return any(m.frame == b.label.birth_frame and m.index == b.label.birth_index for m in meas_ids)


def process_frame(state: FilterState, meas: Sequence[Measurement], frame: Optional[int] = None,
                  log: Optional[EventLog] = None) -> FilterState:
    """Advance the factored density by one frame of measurements."""
    meas = list(meas)
    if frame is None:
        frame = meas[0].id.frame if meas else state.frame
    if any(m.id.frame != frame for m in meas):
        raise ValueError(f"measurements do not all belong to frame {frame}")
    run = _FrameRun(state, frame, log)
    cfg = state.config
    factors = list(run.st.factors.values())
    gm = build_gate_matrix(factors, meas, cfg)
    clusters = [c for c in cluster_stage1(run.st, meas, gm) if c.measurement_ids]
    if cfg.merge_split:
        groups = cluster_stage2(factors, clusters)
    elif factors or clusters:
        groups = [SuperGroup(frozenset(f.id for f in factors), frozenset(range(len(clusters))))]
    else:
        groups = []
    by_id = {m.id: m for m in meas}
    for g in groups:
        fs = [run.st.factors[i] for i in sorted(g.factor_ids)]
        parts = [clusters[k].measurement_ids for k in sorted(g.cluster_ids)]
        mids = sorted(mid for p in parts for mid in p)
        run.group(fs, [by_id[mid] for mid in mids], parts, gm)
    run.st.factors = dict(sorted(run.out.items()))
    pruned = delete_empty(run.st)
    for fid in sorted(run.st.factors.keys() - pruned.factors.keys()):
        run.event("deleted", (fid,), labels=(run.st.factors[fid].label_set,))
    pruned.frame = frame + 1
    return pruned
