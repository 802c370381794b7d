"""Frame files, TOML configuration, and the counts / estimates / pedigree outputs."""
from __future__ import annotations

import json
import math
import sys
from typing import IO, Iterable, Iterator, Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import MeasurementId
from .events import PedigreeEvent
from .exceptions import ConfigError, FrameFormatError, InvalidSpec
from .glmb import TrackerConfig
from .kinematics import Measurement, MotionModel, SensorModel
from .scenario import Frame, ScenarioSpec, TargetSpec

COUNTS_HEADER = "frame,num_factors,total_hypos"

# --------------------------------------------------------------------------- frames


def parse_frame_line(text: str, line: int, meas_dim: Optional[int] = None) -> Frame:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as e:
        raise FrameFormatError(line, f"invalid JSON ({e.msg})") from None
    if not isinstance(rec, dict):
        raise FrameFormatError(line, "record must be an object")
    missing = {"frame", "measurements"} - rec.keys()
    if missing:
        raise FrameFormatError(line, f"missing field(s) {sorted(missing)}")
    k = rec["frame"]
    if not isinstance(k, int) or isinstance(k, bool) or k < 0:
        raise FrameFormatError(line, "frame must be a non-negative integer")
    t = rec.get("time", 0.0)
    if not isinstance(t, (int, float)) or isinstance(t, bool):
        raise FrameFormatError(line, "time must be a number")
    zs = rec["measurements"]
    if not isinstance(zs, list):
        raise FrameFormatError(line, "measurements must be a list")
    meas = []
    for i, z in enumerate(zs):
        try:
            v = np.asarray(z, dtype=float)
        except (TypeError, ValueError):
            raise FrameFormatError(line, f"measurement {i} is not numeric") from None
        if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
            raise FrameFormatError(line, f"measurement {i} must be a finite vector")
        if meas_dim is not None and v.size != meas_dim:
            raise FrameFormatError(line, f"measurement {i} has dimension {v.size}, "
                                         f"expected {meas_dim}")
        meas.append(Measurement(MeasurementId(k, i), v))
    return Frame(k, meas, float(t))


def iter_frames(src: Iterable[str], meas_dim: Optional[int] = None) -> Iterator[Frame]:
    """Parse frame records lazily; blank lines are ignored."""
    last = None
    for line, text in enumerate(src, start=1):
        if not text.strip():
            continue
        fr = parse_frame_line(text, line, meas_dim)
        if last is not None and fr.frame <= last:
            raise FrameFormatError(line, f"frame {fr.frame} does not follow frame {last}")
        if meas_dim is None and fr.measurements:
            meas_dim = fr.measurements[0].z.size
            for m in fr.measurements:
                if m.z.size != meas_dim:
                    raise FrameFormatError(line, "measurement dimensions differ")
        last = fr.frame
        yield fr


def read_frames(path, meas_dim: Optional[int] = None) -> list:
    with open(path, encoding="utf-8") as fh:
        return list(iter_frames(fh, meas_dim))


def frame_record(fr: Frame) -> str:
    rec = {"frame": fr.frame, "time": fr.time,
           "measurements": [[float(x) for x in m.z] for m in fr.measurements]}
    return json.dumps(rec, separators=(",", ":"))


def write_frames(sink: IO[str], frames: Iterable[Frame]) -> None:
    for fr in frames:
        sink.write(frame_record(fr) + "\n")

# --------------------------------------------------------------------------- config

_MODEL_KEYS = {
    "dt", "accel_psd", "transition", "process_noise", "survival_prob",
    "observation", "meas_noise", "detect_prob", "fov_min", "fov_max",
    "mode_offsets", "mode_weights",
}
_TRACKER_KEYS = {
    "birth_cov", "clutter_density", "window_n", "max_children_per_hypo",
    "max_product_hypos", "max_hypos_per_factor", "independence_tol", "gate_gamma",
    "empty_factor_tol", "birth_prob", "merge_split", "prune_weight",
}
_SCENARIO_KEYS = {"num_frames", "clutter_rate", "truth_process_noise", "targets"}


def _load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None


def _require(d: dict, key: str, err=ConfigError):
    if key not in d:
        raise err(f"missing required key '{key}'")
    return d[key]


def _models(d: dict, clutter_density: float, err=ConfigError) -> tuple:
    try:
        ps = float(_require(d, "survival_prob", err))
        if "transition" in d:
            motion = MotionModel(np.asarray(d["transition"], dtype=float),
                                 np.asarray(_require(d, "process_noise", err), dtype=float), ps)
        else:
            ndim = len(_require(d, "fov_min", err))
            motion = MotionModel.constant_velocity(float(d.get("dt", 1.0)),
                                                   float(_require(d, "accel_psd", err)), ps, ndim)
        dim = motion.transition.shape[0]
        if "observation" in d:
            H = np.asarray(d["observation"], dtype=float)
        else:
            H = np.eye(dim // 2, dim)
        modes = None
        if "mode_offsets" in d or "mode_weights" in d:
            offs, ws = _require(d, "mode_offsets", err), _require(d, "mode_weights", err)
            if len(offs) != len(ws):
                raise err("mode_offsets and mode_weights differ in length")
            modes = tuple(zip(offs, ws))
        sensor = SensorModel(H, np.asarray(_require(d, "meas_noise", err), dtype=float),
                             float(_require(d, "detect_prob", err)), clutter_density,
                             (_require(d, "fov_min", err), _require(d, "fov_max", err)), modes)
    except (ValueError, TypeError, np.linalg.LinAlgError) as e:
        if isinstance(e, err):
            raise
        raise err(str(e)) from None
    return motion, sensor


def config_from_dict(d: dict) -> TrackerConfig:
    unknown = d.keys() - _MODEL_KEYS - _TRACKER_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    motion, sensor = _models(d, float(_require(d, "clutter_density")))
    kw = {k: d[k] for k in _TRACKER_KEYS - {"clutter_density"} if k in d}
    kw["birth_cov"] = np.asarray(_require(d, "birth_cov"), dtype=float)
    try:
        return TrackerConfig(motion, sensor, **kw)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> TrackerConfig:
    return config_from_dict(_load_toml(path))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def dump_flat_toml(d: dict) -> str:
    """Write a flat mapping (scalars and nested numeric lists) as TOML."""
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in d.items())


def config_to_dict(cfg: TrackerConfig) -> dict:
    m, s = cfg.motion, cfg.sensor
    d = {
        "transition": m.transition, "process_noise": m.process_noise,
        "survival_prob": m.survival_prob, "observation": s.observation,
        "meas_noise": s.noise, "detect_prob": s.detect_prob,
        "clutter_density": s.clutter_density, "fov_min": s.fov[0], "fov_max": s.fov[1],
    }
    if s.modes:
        d["mode_offsets"] = [s.mode_offset(i) for i in range(s.num_modes)]
        d["mode_weights"] = [math.exp(s.mode_log_weight(i)) for i in range(s.num_modes)]
    d["birth_cov"] = cfg.birth_cov
    for k in ("window_n", "max_children_per_hypo", "max_product_hypos", "max_hypos_per_factor",
              "independence_tol", "gate_gamma", "empty_factor_tol", "birth_prob", "merge_split",
              "prune_weight"):
        d[k] = getattr(cfg, k)
    return d

# --------------------------------------------------------------------------- scenario spec


def scenario_from_dict(d: dict) -> ScenarioSpec:
    unknown = d.keys() - _MODEL_KEYS - _SCENARIO_KEYS
    if unknown:
        raise InvalidSpec(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
    n = _require(d, "num_frames", InvalidSpec)
    if not isinstance(n, int) or n < 0:
        raise InvalidSpec("num_frames must be a non-negative integer")
    rate = float(d.get("clutter_rate", 0.0))
    if rate < 0:
        raise InvalidSpec("clutter_rate must be non-negative")
    # the generator needs no clutter density; any positive value keeps SensorModel valid
    motion, sensor = _models(d, 1.0, InvalidSpec)
    targets = []
    for k, t in enumerate(d.get("targets", [])):
        try:
            targets.append(TargetSpec(int(t["birth_frame"]), int(t["death_frame"]),
                                      tuple(float(x) for x in t["state"])))
        except (KeyError, TypeError, ValueError):
            raise InvalidSpec(f"target {k} needs birth_frame, death_frame and state") from None
    return ScenarioSpec(n, motion, sensor, rate, targets,
                        bool(d.get("truth_process_noise", False)), float(d.get("dt", 1.0)))


def load_scenario(path) -> ScenarioSpec:
    try:
        return scenario_from_dict(_load_toml(path))
    except ConfigError as e:
        raise InvalidSpec(str(e)) from None

# --------------------------------------------------------------------------- outputs


def write_counts(sink: IO[str], frame: int, num_factors: int, total_hypos: int) -> None:
    if num_factors < 0 or total_hypos < 0:
        raise ValueError("counts must be non-negative")
    sink.write(f"{int(frame)},{int(num_factors)},{int(total_hypos)}\n")


def estimate_record(frame: int, ests: Sequence[tuple]) -> str:
    tracks = [{"label": str(lab), "mean": [float(x) for x in mean]} for lab, mean in ests]
    return json.dumps({"frame": frame, "tracks": tracks}, separators=(",", ":"))


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def write_tree(sink: IO[str], events: Sequence[PedigreeEvent], live=None) -> None:
    """Render the hypothesis pedigree as a Graphviz digraph.

    ``head`` is the virtual root.  Leaves are drawn as diamonds when they
    are live (``live`` is a set of node ids; by default every childless
    node counts as live).
    """
    has_child = {p for e in events for p in e.parents}
    if live is None:
        live = {e.node for e in events} - has_child
    sink.write("digraph pedigree {\n")
    sink.write('  head [label="head", shape=box];\n')
    for e in events:
        text = "\\n".join(_dot_escape(a) for a in e.track_assoc) or "{}"
        shape = "diamond" if e.node in live and e.node not in has_child else "ellipse"
        sink.write(f'  n{e.node} [label="{text}\\n{_dot_escape(e.weight_label)}", '
                   f'xlabel="{e.frame}", shape={shape}];\n')
    for e in events:
        for p in e.parents:
            src = "head" if p == 0 else f"n{p}"
            sink.write(f"  {src} -> n{e.node};\n")
    sink.write("}\n")
