"""``mstrack simulate`` and ``mstrack track`` entry points."""
from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from . import formats
from .core import FilterState
from .events import EventLog
from .exceptions import TrackerError
from .merge_split import estimates, process_frame
from .scenario import generate_frames

COUNTS_FILE = "counts.csv"
ESTIMATES_FILE = "estimates.jsonl"
TREE_FILE = "pedigree.dot"


def _fail(msg: str) -> int:
    print(f"mstrack: error: {msg}", file=sys.stderr)
    return 1


def run_track(frames_path, config_path, out_dir, debug_tree: bool = False) -> int:
    """Stream a frame file through the tracker and write the diagnostic outputs."""
    try:
        cfg = formats.load_config(config_path)
    except (OSError, TrackerError) as e:
        return _fail(f"config {config_path}: {e}")
    try:
        os.makedirs(out_dir, exist_ok=True)
        fin = open(frames_path, encoding="utf-8")
    except OSError as e:
        return _fail(str(e))
    log = EventLog(pedigree=debug_tree)
    state: Optional[FilterState] = None
    with fin, \
            open(os.path.join(out_dir, COUNTS_FILE), "w", encoding="utf-8", newline="") as counts, \
            open(os.path.join(out_dir, ESTIMATES_FILE), "w", encoding="utf-8") as ests:
        counts.write(formats.COUNTS_HEADER + "\n")
        try:
            for fr in formats.iter_frames(fin, cfg.sensor.meas_dim):
                if state is None:
                    state = FilterState.initial(cfg, fr.frame)
                state = process_frame(state, fr.measurements, fr.frame, log)
                formats.write_counts(counts, fr.frame, len(state.factors),
                                     state.total_hypotheses())
                ests.write(formats.estimate_record(fr.frame, estimates(state)) + "\n")
        except formats.FrameFormatError as e:
            return _fail(f"{frames_path}: {e}")
        except (TrackerError, ValueError) as e:
            return _fail(f"tracking failed: {e}")
    if debug_tree:
        live = set()
        if state is not None:
            live = {h.node for f in state.factors.values() for h in f.hypotheses}
        with open(os.path.join(out_dir, TREE_FILE), "w", encoding="utf-8") as fh:
            formats.write_tree(fh, log.hypo_events, live)
    return 0


def run_simulate(spec_path, out_path, seed: int = 0) -> int:
    try:
        spec = formats.load_scenario(spec_path)
        frames = generate_frames(spec, seed)
    except (OSError, TrackerError) as e:
        return _fail(f"spec {spec_path}: {e}")
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            formats.write_frames(fh, frames)
    except OSError as e:
        return _fail(str(e))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mstrack", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="generate a synthetic frame file")
    s.add_argument("--spec", required=True, help="scenario description (TOML)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="frame file to write")
    t = sub.add_parser("track", help="run the tracker over a frame file")
    t.add_argument("--frames", required=True)
    t.add_argument("--config", required=True, help="tracker configuration (TOML)")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--debug-tree", action="store_true", help="also write the hypothesis pedigree")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return run_simulate(args.spec, args.out, args.seed)
    return run_track(args.frames, args.config, args.out, args.debug_tree)


if __name__ == "__main__":
    sys.exit(main())
