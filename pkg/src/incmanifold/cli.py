"""Command-line interface: ``incmanifold gen|reconstruct|bench|check``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .carving import WeightScheme
from .checks import engine_violations
from .eval_bench import compare_policies, export_mesh, reports_to_csv, rows_to_csv, summarize
from .geometry import Box
from .moving_points import MovePolicy, TransferRule
from .pipeline import Engine, EngineConfig
from .sim_ingest import ParseError, SceneSpec, SceneStream, generate, read_stream, validate_stream, write_stream

POLICIES = ("straightforward", "mean", "wmean", "mindist")


def make_policy(name: str, window: Optional[int] = 15, k_forget: Optional[int] = 5) -> MovePolicy:
    name = name.strip().lower()
    if name == "straightforward":
        return MovePolicy.straightforward(k_forget=k_forget, window=window)
    try:
        return MovePolicy.efficient(TransferRule(name), window=window)
    except ValueError:
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}") from None


def _optional_int(text: str) -> Optional[int]:
    if text.lower() in ("none", "inf", "0"):
        return None
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def _scene(text: str):
    if text in ("box", "corridor"):
        return text, None
    if text.startswith("mesh:") and len(text) > 5:
        return "mesh", text[5:]
    raise argparse.ArgumentTypeError("expected box, corridor or mesh:<path>")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="incmanifold",
                                description="Incremental manifold reconstruction with moving points.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="simulate a capture and write a scene stream")
    g.add_argument("--scene", type=_scene, default=("box", None))
    g.add_argument("--frames", type=int, default=200)
    g.add_argument("--keyframe-every", type=int, default=5)
    g.add_argument("--points", type=int, default=20, help="new points per keyframe")
    g.add_argument("--sigma0", type=float, default=0.3)
    g.add_argument("--gamma", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)

    def engine_flags(q, single_policy=True):
        if single_policy:
            q.add_argument("--policy", choices=POLICIES, default="mindist")
        q.add_argument("--window", type=_optional_int, default=15, help="rays recast per move (0 = all)")
        q.add_argument("--k-forget", type=_optional_int, default=5, help="ray list bound (0 = none)")
        q.add_argument("--steiner", type=float, default=5.0, help="Steiner lattice spacing in meters")
        q.add_argument("--tw", type=float, default=1.0, help="free-space weight threshold")
        q.add_argument("--bootstrap", type=int, default=2, help="keyframes used to bootstrap")

    r = sub.add_parser("reconstruct", help="run a stream and export the surface")
    r.add_argument("-i", "--input", required=True)
    engine_flags(r)
    r.add_argument("-o", "--output", required=True, help="mesh file (.ply or .obj)")
    r.add_argument("--report", help="per-keyframe CSV report")

    b = sub.add_parser("bench", help="compare policies on one stream")
    b.add_argument("-i", "--input", required=True)
    b.add_argument("--policies", default="mindist,straightforward")
    engine_flags(b, single_policy=False)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("-o", "--output", required=True)

    c = sub.add_parser("check", help="validate a stream and run the invariant suite after every keyframe")
    c.add_argument("-i", "--input", required=True)
    engine_flags(c)
    return p


def _config(args, policy: MovePolicy) -> EngineConfig:
    return EngineConfig(scheme=WeightScheme(t_w=args.tw), policy=policy,
                        steiner_spacing=args.steiner, bootstrap_keyframes=args.bootstrap)


def _load(path: str) -> SceneStream:
    stream = read_stream(path)
    if stream.box is None and stream.keyframes:
        stream.box = Box.around(stream.all_positions(), margin=1.0)
    return stream


def _cmd_gen(args) -> int:
    scene, mesh_path = args.scene
    spec = SceneSpec(scene=scene, mesh_path=mesh_path, frames=args.frames,
                     keyframe_every=args.keyframe_every, points_per_keyframe=args.points,
                     sigma0=args.sigma0, gamma=args.gamma, seed=args.seed)
    Path(args.output).write_text(write_stream(generate(spec)), encoding="utf-8")
    return 0


def _cmd_reconstruct(args) -> int:
    stream = _load(args.input)
    _require_valid(stream)
    config = _config(args, make_policy(args.policy, args.window, args.k_forget))
    engine = Engine(config, stream.box)
    reports = engine.run(stream)
    fmt = "obj" if args.output.lower().endswith(".obj") else "ply"
    Path(args.output).write_text(export_mesh(engine.surface(), fmt), encoding="utf-8")
    if args.report:
        Path(args.report).write_text(reports_to_csv(reports), encoding="utf-8")
    dropped = len(engine.dropped)
    print(f"{len(reports)} keyframes, {len(engine.surface())} triangles, {dropped} points dropped",
          file=sys.stderr)
    return 0


def _cmd_bench(args) -> int:
    stream = _load(args.input)
    _require_valid(stream)
    policies = [make_policy(n, args.window, args.k_forget) for n in args.policies.split(",") if n.strip()]
    base = _config(args, policies[0])
    rows = compare_policies(stream, policies, base, repeats=args.repeats)
    Path(args.output).write_text(rows_to_csv(rows, args.repeats), encoding="utf-8")
    print(summarize(rows))
    return 0


class InvalidStream(ValueError):
    pass


def _require_valid(stream: SceneStream) -> None:
    issues = validate_stream(stream)
    if issues:
        raise InvalidStream("; ".join(issues[:5]) + (" ..." if len(issues) > 5 else ""))


def _cmd_check(args) -> int:
    stream = _load(args.input)
    issues = validate_stream(stream)
    for msg in issues:
        print(f"stream: {msg}", file=sys.stderr)
    if issues:
        return 1
    config = _config(args, make_policy(args.policy, args.window, args.k_forget))
    engine = Engine(config, stream.box)
    kfs = stream.keyframes
    n = min(config.bootstrap_keyframes, len(kfs))
    failures = 0
    steps = ([("bootstrap", lambda: engine.bootstrap(kfs[:n]))] if kfs else []) + \
        [(f"keyframe {kf.index}", (lambda kf=kf: engine.process_keyframe(kf))) for kf in kfs[n:]]
    for label, step in steps:
        step()
        for msg in engine_violations(engine):
            print(f"{label}: {msg}", file=sys.stderr)
            failures += 1
    print(f"checked {len(steps)} steps, {failures} violations", file=sys.stderr)
    return 1 if failures else 0


COMMANDS = {"gen": _cmd_gen, "reconstruct": _cmd_reconstruct, "bench": _cmd_bench, "check": _cmd_check}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, InvalidStream, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
