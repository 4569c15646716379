"""Headless entry points: serve the bridge, replay scripted missions,
and run the grasp-phase evaluation.

Event scripts are JSON lists of ``{"t": <sim seconds>, "message":
{...}}`` where the message uses the wire-protocol schema, so the same
file can drive a socket or a headless replay.

Exit codes: 0 success, 2 mission fault/timeout, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import protocol
from .evalrun import EVAL_CLASSES, run_eval
from .metrics import write_metrics
from .mission import MissionController, Phase
from .scenario import ParseError, ValidationError, load_scenario_file
from .scene import NoiseConfig

EXIT_OK = 0
EXIT_FAULT = 2
EXIT_CONFIG = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadpick", description=__doc__)
    parser.add_argument("--scenario", required=True, help="scenario JSON path")
    parser.add_argument("--mode", choices=("serve", "run", "eval"), required=True)
    parser.add_argument("--port", type=int, default=8765, help="serve: WebSocket port")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: scenario seed)")
    parser.add_argument("--trials", type=int, default=12, help="eval: number of grasp trials")
    parser.add_argument("--script", help="run: timestamped event script (JSON)")
    parser.add_argument("--out", help="output path (run: directory; eval: metrics file)")
    parser.add_argument("--full", action="store_true", help="eval: run full missions with navigation")
    parser.add_argument("--noise-sigma", type=float, default=None, help="override depth noise sigma (m)")
    parser.add_argument("--timeout", type=float, default=600.0, help="run: sim-time budget in seconds")
    return parser


def _load_scene(args):
    scene = load_scenario_file(args.scenario)
    if args.noise_sigma is not None:
        scene.noise = NoiseConfig(
            depth_sigma=args.noise_sigma,
            detect_jitter_px=scene.noise.detect_jitter_px,
        )
    return scene


def load_script(path) -> list[tuple[float, dict]]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError("script must be a JSON list")
    events = []
    for i, entry in enumerate(raw):
        if "t" not in entry or "message" not in entry:
            raise ValueError(f"script[{i}]: needs 't' and 'message'")
        protocol.validate_inbound(entry["message"])
        events.append((float(entry["t"]), entry["message"]))
    events.sort(key=lambda e: e[0])
    return events


def run_scripted(scene, script, seed, timeout_s, out_dir=None) -> tuple[int, MissionController]:
    """Replay a timestamped event script headless; 0 iff the mission
    reaches Done within the sim-time budget."""
    controller = MissionController(scene, seed=seed)
    rooms = [room.name for room in scene.rooms]
    pending = list(script)
    next_seq = 0
    while controller.sim_time < timeout_s:
        while pending and pending[0][0] <= controller.sim_time:
            _, message = pending.pop(0)
            controller.submit(protocol.inbound(message, next_seq, rooms=rooms))
            next_seq += 1
        controller.run_tick()
        if pending or controller.event_queue:
            continue
        if controller.phase in (Phase.DONE, Phase.FAULTED):
            break
        # operator stopped the mission and nothing else is scheduled
        if controller.phase == Phase.IDLE and next_seq > 0:
            break
    status = controller.status()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.json").write_text(
            json.dumps(controller.trace, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        write_metrics(controller.metrics, out / "metrics.ndjson")
        (out / "final_status.json").write_text(
            json.dumps(status.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    if controller.phase == Phase.DONE:
        return EXIT_OK, controller
    return EXIT_FAULT, controller


def run_full_mission_trials(scene_path, trials, master_seed, noise_sigma=None):
    """Full missions (navigation included), cycling the reference
    scenario's objects; one grasp record per trial."""
    import numpy as np

    from . import perception
    from .mission import EventKind, OperatorEvent

    targets = ["charger-1", "golf-ball-1", "battery-1"]
    records = []
    for trial in range(trials):
        scene = load_scenario_file(scene_path)
        if noise_sigma is not None:
            scene.noise = NoiseConfig(noise_sigma, scene.noise.detect_jitter_px)
        controller = MissionController(scene, seed=master_seed + trial)
        target = targets[trial % len(targets)]
        seq = 0
        controller.submit(OperatorEvent(kind=EventKind.GO_TO_ROOM, seq=seq, room="Room A"))
        seq += 1
        clicked_front = clicked_gripper = False
        while controller.sim_time < 240.0:
            controller.run_tick()
            if controller.phase == Phase.SCANNING and not clicked_front:
                boxes = {d.object_id: d for d in controller.last_detections}
                if target in boxes:
                    b = boxes[target].bbox
                    controller.submit(OperatorEvent(
                        kind=EventKind.SELECT_CLICK, seq=seq, camera="front",
                        point=((b[0] + b[2]) / 2, (b[1] + b[3]) / 2)))
                    seq += 1
                    clicked_front = True
            if controller.phase == Phase.AWAIT_GRASP_SELECTION and not clicked_gripper:
                frame = controller.last_gripper_frame
                boxes = {d.object_id: d for d in perception.detect(frame)} if frame else {}
                if target in boxes:
                    b = boxes[target].bbox
                    controller.submit(OperatorEvent(
                        kind=EventKind.SELECT_CLICK, seq=seq, camera="gripper",
                        point=((b[0] + b[2]) / 2, (b[1] + b[3]) / 2)))
                    seq += 1
                    clicked_gripper = True
            if controller.metrics or controller.phase in (Phase.DONE, Phase.FAULTED):
                if controller.metrics:
                    break
        if controller.metrics:
            record = controller.metrics[0]
            record.trial = trial + 1
            records.append(record)
    return records


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scene = _load_scene(args)
    except FileNotFoundError as exc:
        print(f"scenario not found: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, ValidationError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.mode == "serve":
        from .bridge import PortInUse, serve

        try:
            serve(args.scenario, port=args.port, seed=args.seed)
        except PortInUse as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    if args.mode == "run":
        if not args.script:
            print("--script is required in run mode", file=sys.stderr)
            return EXIT_CONFIG
        try:
            script = load_script(args.script)
        except (ValueError, protocol.SchemaViolation, protocol.UnknownType) as exc:
            print(f"invalid script: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        code, controller = run_scripted(scene, script, args.seed, args.timeout, args.out)
        status = controller.status()
        print(f"mission finished in state {status.phase} at t={status.sim_time:.2f}s")
        if code != EXIT_OK:
            reason = status.fault_reason or f"stalled in {status.phase}"
            print(f"not completed: {reason}", file=sys.stderr)
        return code

    # eval
    if args.trials < 1:
        print("--trials must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    seed = scene.seed if args.seed is None else args.seed
    if args.full:
        records = run_full_mission_trials(args.scenario, args.trials, seed, args.noise_sigma)
    else:
        records = run_eval(scene, args.trials, seed)
    out_path = Path(args.out) if args.out else Path("metrics.ndjson")
    try:
        summary = write_metrics(records, out_path)
    except OSError as exc:
        print(f"cannot write metrics: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rate = summary["success_rate"]
    print(
        f"{summary['trials']} trials, {summary['successes']} successes"
        + (f" (rate {rate:.3f})" if rate is not None else "")
    )
    for cls, stats in summary["per_class"].items():
        print(f"  {cls}: {stats['successes']}/{stats['trials']}")
    print(f"metrics written to {out_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
