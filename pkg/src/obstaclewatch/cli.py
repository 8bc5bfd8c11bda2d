"""Command line: ``obstaclewatch {beep,simulate,detect,eval,make-batch}``.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import List, Optional, Sequence

from .errors import InputError, ObstacleWatchError
from .evaluation import (evaluate, load_batch, standard_batch, write_batch, write_report)
from .files import (DETECTION_COLUMNS, detection_rows, frames_to_array, load_config,
                    load_document, read_wav, scene_from_document, stereo_frames,
                    trajectory_from_document, truth_to_dict, write_csv, write_json, write_wav)
from .pipeline import ObstacleWatch, RunConfig
from .signal_core import build_ping_schedule
from .simulator import synthesize_walk

log = logging.getLogger("obstaclewatch")


def cmd_beep(args, config: RunConfig) -> int:
    if args.pings < 1:
        raise InputError("--pings must be at least 1")
    train = build_ping_schedule(config.beep, args.pings)
    write_wav(args.output, train.samples, config.beep.sample_rate, args.dtype)
    log.info("wrote %d samples (%d pings) to %s", len(train), args.pings, args.output)
    return 0


def cmd_simulate(args, config: RunConfig) -> int:
    scene = scene_from_document(load_document(args.scene))
    traj = trajectory_from_document(load_document(args.trajectory))
    frames, truth = synthesize_walk(scene, traj, config.beep, args.seed)
    write_wav(args.output, frames_to_array(frames), config.beep.sample_rate, args.dtype)
    truth_path = args.truth or os.path.splitext(args.output)[0] + ".truth.json"
    write_json(truth_path, truth_to_dict(truth, args.seed))
    log.info("wrote %d pings to %s, ground truth to %s", len(frames), args.output, truth_path)
    return 0


def cmd_detect(args, config: RunConfig) -> int:
    data, rate = read_wav(args.wav)
    beep = config.beep
    if rate != beep.sample_rate:
        raise InputError(f"{args.wav} is sampled at {rate} Hz, configuration expects "
                         f"{beep.sample_rate} Hz")
    frames = stereo_frames(data, rate, beep.ping_period_samples)
    watch = ObstacleWatch(config)
    records = []
    alerted = set()
    for frame in frames:
        recs = watch.process(frame)
        records.extend(recs)
        for r in recs:
            if r.alert and r.track_id not in alerted:
                alerted.add(r.track_id)
                d1 = r.estimate.d1 if r.estimate else math.nan
                print(f"ALERT frame={r.frame_index} track={r.track_id} d1={d1:.3f}")
    write_csv(args.output, detection_rows(records), DETECTION_COLUMNS)
    log.info("%d pings, %d records, %d skipped, alert=%s", len(frames), len(records),
             len(watch.rejected_frames), bool(alerted))
    return 0


def cmd_eval(args, config: RunConfig) -> int:
    cases = load_batch(args.batch)
    report = evaluate(cases, config, args.workers)
    write_report(report, args.output)
    print(f"TP={report.tp_rate:.3f} TN={report.tn_rate:.3f} "
          f"false_alert={report.false_alert_rate:.3f} "
          f"baseline_false_alert={report.baseline_false_alert_rate:.3f} "
          f"clutter_leaks={report.clutter_leaks}")
    return 0


def cmd_make_batch(args, config: RunConfig) -> int:
    cases = standard_batch(args.n_collide, args.n_miss, args.seed)
    write_batch(cases, args.output)
    log.info("wrote %d cases to %s", len(cases), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config field, e.g. beep.f_low=16000 or phone=Note5")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="obstaclewatch",
                                     description="Acoustic obstacle detection for walking users.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("beep", parents=[common], help="write the transmitted ping train")
    p.add_argument("-o", "--output", default="beep.wav")
    p.add_argument("-n", "--pings", type=int, default=1)
    p.add_argument("--dtype", choices=("float32", "int16"), default="float32")
    p.set_defaults(func=cmd_beep)

    p = sub.add_parser("simulate", parents=[common], help="render a walk to stereo WAV")
    p.add_argument("scene")
    p.add_argument("trajectory")
    p.add_argument("-o", "--output", default="walk.wav")
    p.add_argument("--truth", help="ground-truth path (default: <output>.truth.json)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=("float32", "int16"), default="float32")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", parents=[common], help="run detection on a stereo WAV")
    p.add_argument("wav")
    p.add_argument("-o", "--output", default="detections.csv")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", parents=[common], help="score a batch directory")
    p.add_argument("batch")
    p.add_argument("-o", "--output", default="report")
    p.add_argument("-j", "--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("make-batch", parents=[common], help="write the standard walk batch")
    p.add_argument("output")
    p.add_argument("--n-collide", type=int, default=100)
    p.add_argument("--n-miss", type=int, default=100)
    p.add_argument("--seed", type=int, default=2024)
    p.set_defaults(func=cmd_make_batch)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.overrides)
        return args.func(args, config)
    except ObstacleWatchError as exc:
        print(f"obstaclewatch: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
