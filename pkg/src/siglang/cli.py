"""Batch command-line front end.

Thin wrapper over the library: every subcommand parses flags, calls the
corresponding package function, and prints a plain-text summary and/or a
JSON report. All paths are local and nothing touches the network (the
``serve`` subcommand only *starts* the HTTP service; the other commands
never speak to it).

Exit codes: 0 success, 2 input/corpus error, 3 unknown vocabulary,
4 topology mismatch, 1 internal error.

Report JSON is byte-stable: keys are emitted in schema order and floats
are formatted at 9 significant digits, so identical inputs give identical
bytes regardless of worker count. A JSON config file named by the
``SIGLANG_CONFIG`` environment variable overlays flag defaults (keys match
flag names with underscores); explicit flags still win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import refdb
from .assessment import AssessmentConfig, assess, report_to_dict
from .embedding import load_weights_file
from .errors import (
    DegenerateInput,
    SigLangError,
    TopologyMismatch,
    UnknownVocab,
)
from .evalstats import graded_corpus, rank, read_ratings_csv, spearman
from .motion_io import (
    dumps_motion_json,
    loads_motion_json,
    read_bvh_file,
    write_bvh,
)
from .smoothing import SmoothingConfig

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_UNKNOWN_VOCAB = 3
EXIT_TOPOLOGY = 4

DEFAULT_LEVELS = "0,0.05,0.1,0.2,0.4"


def _fmt(value: float) -> str:
    """Format a float at 9 significant digits (stable report output)."""
    return format(float(value) + 0.0, ".9g")


def dumps_stable(obj) -> str:
    """JSON with insertion-ordered keys and 9-significant-digit floats."""

    def emit(node) -> str:
        if isinstance(node, dict):
            return "{" + ",".join(
                json.dumps(str(k)) + ":" + emit(v) for k, v in node.items()) + "}"
        if isinstance(node, (list, tuple)):
            return "[" + ",".join(emit(v) for v in node) + "]"
        if isinstance(node, bool) or node is None:
            return json.dumps(node)
        if isinstance(node, float):
            return _fmt(node)
        if isinstance(node, int):
            return str(node)
        return json.dumps(node)

    return emit(obj) + "\n"


def _build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="siglang",
        description="Score skeletal sign-language motion against teacher references.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="build a reference database from BVH files")
    p_build.add_argument("--corpus", required=True, help="directory of labeled .bvh files")
    p_build.add_argument("--out", required=True, help="database file to write")
    p_build.add_argument("--fps", type=float, default=30.0, help="canonical frame rate")
    p_build.add_argument("--n", type=int, default=64, help="max embedding dimension")
    p_build.add_argument("--window", type=int, default=7, help="smoothing window (odd)")
    p_build.add_argument("--order", type=int, default=3, help="smoothing polynomial order")
    p_build.add_argument("--alpha", type=float, default=8.0, help="smoothness score sharpness")
    p_build.add_argument("--scale", type=float, default=0.01, help="meters per BVH unit")
    p_build.add_argument("--frames", type=int, default=32, help="descriptor frame count")
    p_build.add_argument("--temperature", type=float, default=1.0,
                         help="softmax temperature for classification")
    p_build.add_argument("--weights", default=None, help="embedding weights JSON file")

    p_assess = sub.add_parser("assess", help="assess one student file against the database")
    p_assess.add_argument("--db", required=True, help="database file")
    p_assess.add_argument("--student", required=True, help="student .bvh file")
    p_assess.add_argument("--vocab", required=True, help="vocabulary label to assess against")
    p_assess.add_argument("--report", default=None, help="write the JSON report here")
    p_assess.add_argument("--weights", default=None, help="embedding weights JSON file")
    p_assess.add_argument("--scale", type=float, default=0.01, help="meters per BVH unit")
    p_assess.add_argument("--band", type=int, default=None, help="DTW band half-width")
    p_assess.add_argument("--workers", type=int, default=1, help="worker threads")

    p_eval = sub.add_parser("eval", help="rank-correlation evaluation over a graded corpus")
    p_eval.add_argument("--db", required=True, help="database file")
    src = p_eval.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", default=None,
                     help="directory of student .bvh files named <vocab>__<id>.bvh")
    src.add_argument("--synthetic", type=int, default=None, metavar="SEED",
                     help="generate seeded synthetic graded students instead")
    p_eval.add_argument("--ratings", default=None,
                        help="CSV of ground-truth ratings (id,score) for --corpus")
    p_eval.add_argument("--levels", default=DEFAULT_LEVELS,
                        help="comma-separated noise levels for --synthetic")
    p_eval.add_argument("--takes", type=int, default=1, help="takes per noise level")
    p_eval.add_argument("--csv", default=None, help="write (id,composite,rank) CSV here")
    p_eval.add_argument("--scale", type=float, default=0.01, help="meters per BVH unit")
    p_eval.add_argument("--band", type=int, default=None, help="DTW band half-width")
    p_eval.add_argument("--workers", type=int, default=1, help="worker threads")

    p_convert = sub.add_parser("convert", help="convert between BVH and the JSON mirror")
    p_convert.add_argument("--in", dest="infile", required=True)
    p_convert.add_argument("--out", dest="outfile", required=True)
    p_convert.add_argument("--scale", type=float, default=0.01, help="meters per BVH unit")

    p_serve = sub.add_parser("serve", help="start the HTTP assessment service")
    p_serve.add_argument("--db", required=True, help="database file")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    return parser, dict(sub.choices)


def _apply_config_overlay(subparsers, argv):
    """Overlay SIGLANG_CONFIG values as defaults for the active subcommand."""
    config_path = os.environ.get("SIGLANG_CONFIG")
    if not config_path:
        return
    with open(config_path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise ValueError("config overlay must be a JSON object")
    dests = {name: {a.dest for a in sp._actions}
             for name, sp in subparsers.items()}
    known = set().union(*dests.values())
    unknown = sorted(set(config) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    command = next((a for a in argv if not a.startswith("-")), None)
    if command in subparsers:
        subparsers[command].set_defaults(
            **{k: v for k, v in config.items() if k in dests[command]})


def cmd_build(args) -> int:
    cfg = refdb.BuildConfig(
        canonical_fps=args.fps,
        n_max=args.n,
        scale=args.scale,
        smoothing=SmoothingConfig(args.window, args.order, args.alpha),
        descriptor_frames=args.frames,
        temperature=args.temperature,
    )
    weights = None
    if args.weights:
        weights = load_weights_file(args.weights)
    db = refdb.build(args.corpus, cfg, weights)
    refdb.save(db, args.out)
    print(f"vocabulary items: {len(db.labels)}")
    print(f"teacher takes: {len(db.takes)}")
    print(f"embedding dimension: {db.n}")
    print(f"topology joints ({len(db.joint_names)}): {', '.join(db.joint_names)}")
    print(f"database written to {args.out}")
    return EXIT_OK


def _print_report_summary(report_dict: dict) -> None:
    print(f"vocab: {report_dict['vocab']} (assigned: {report_dict['confusion']['assigned']})")
    print(f"composite: {_fmt(report_dict['composite'])}")
    print(f"C (confusion): {_fmt(report_dict['confusion']['C'])}")
    print(f"S (smoothness): {_fmt(report_dict['smoothness']['S'])}")
    print(f"D (alignment): {_fmt(report_dict['alignment']['D'])} "
          f"score: {_fmt(report_dict['alignment']['score'])}")
    print(f"worst joints: {', '.join(report_dict['worst_joints'])}")


def cmd_assess(args) -> int:
    db = refdb.load(args.db)
    student = read_bvh_file(args.student, scale=args.scale)
    weights = load_weights_file(args.weights, db.topology) if args.weights else None
    cfg = AssessmentConfig(band=args.band)
    report = report_to_dict(assess(student, args.vocab, db, cfg, weights))
    if args.report:
        Path(args.report).write_text(dumps_stable(report), encoding="utf-8")
    _print_report_summary(report)
    return EXIT_OK


def _assess_many(db, items, cfg, workers):
    """items: list of (id, vocab, motion); returns {id: composite}, sorted later."""

    def one(item):
        sid, vocab, motion = item
        report = assess(motion, vocab, db, cfg)
        return sid, report.composite

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(item) for item in items]
    return dict(results)


def cmd_eval(args) -> int:
    db = refdb.load(args.db)
    cfg = AssessmentConfig(band=args.band)

    # (vocab, [(id, motion, ground_truth_score)]) per evaluation set
    sets: list[tuple[str, list[tuple[str, object, float]]]] = []
    if args.synthetic is not None:
        levels = [float(v) for v in args.levels.split(",")]
        for vi, vocab in enumerate(db.labels):
            teacher = db.entry(vocab).motion
            students = graded_corpus(teacher, levels, args.takes,
                                     seed=args.synthetic + vi)
            sets.append((vocab, [
                (f"{vocab}__L{s.level}t{s.take}", s.motion, -s.sigma)
                for s in students
            ]))
    else:
        corpus = Path(args.corpus)
        files = sorted(p for p in corpus.iterdir() if p.suffix.lower() == ".bvh") \
            if corpus.is_dir() else []
        if not files:
            print(f"error: empty corpus: no .bvh files in {args.corpus}",
                  file=sys.stderr)
            return EXIT_INPUT
        if not args.ratings:
            print("error: --corpus evaluation needs --ratings", file=sys.stderr)
            return EXIT_INPUT
        ratings = read_ratings_csv(args.ratings)
        grouped: dict[str, list] = {}
        for path in files:
            stem = path.stem
            vocab, _, sid = stem.partition("__")
            sid = sid or stem
            if sid not in ratings:
                print(f"note: no rating for {stem}, skipped", file=sys.stderr)
                continue
            motion = read_bvh_file(path, scale=args.scale)
            grouped.setdefault(vocab, []).append((sid, motion, ratings[sid]))
        sets = sorted(grouped.items())

    all_items = [(sid, vocab, motion)
                 for vocab, items in sets for sid, motion, _ in items]
    composites = _assess_many(db, all_items, cfg, max(1, args.workers))

    rows = []
    rhos = []
    for vocab, items in sets:
        scores = [composites[sid] for sid, _, _ in items]
        truth = [gt for _, _, gt in items]
        ranks = rank(scores).ranks
        for (sid, _, _), r in zip(items, ranks):
            rows.append((sid, composites[sid], r))
        try:
            rho = spearman(scores, truth)
        except DegenerateInput as exc:
            print(f"set {vocab}: skipped ({exc})")
            continue
        rhos.append(rho)
        print(f"set {vocab}: rho = {_fmt(rho)}")

    if not rhos:
        print("error: no usable evaluation sets", file=sys.stderr)
        return EXIT_INPUT
    print(f"average rho over {len(rhos)} sets: {_fmt(sum(rhos) / len(rhos))}")

    rows.sort(key=lambda r: r[0])
    csv_text = "id,composite,rank\n" + "".join(
        f"{sid},{_fmt(score)},{_fmt(r)}\n" for sid, score, r in rows)
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    return EXIT_OK


def cmd_convert(args) -> int:
    src = Path(args.infile)
    dst = Path(args.outfile)
    src_ext = src.suffix.lower()
    dst_ext = dst.suffix.lower()
    if src_ext == ".bvh" and dst_ext == ".json":
        motion = read_bvh_file(src, scale=args.scale)
        dst.write_text(dumps_motion_json(motion), encoding="utf-8")
    elif src_ext == ".json" and dst_ext == ".bvh":
        motion = loads_motion_json(src.read_text(encoding="utf-8"))
        dst.write_text(write_bvh(motion, scale=args.scale), encoding="utf-8")
    else:
        print(f"error: cannot convert {src_ext or '<none>'} to {dst_ext or '<none>'} "
              "(expected .bvh <-> .json)", file=sys.stderr)
        return EXIT_INPUT
    print(f"wrote {dst}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.db)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


_HANDLERS = {
    "build": cmd_build,
    "assess": cmd_assess,
    "eval": cmd_eval,
    "convert": cmd_convert,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = _build_parser()
    try:
        _apply_config_overlay(subparsers, argv)
    except (OSError, ValueError) as exc:
        print(f"error: bad config overlay: {exc}", file=sys.stderr)
        return EXIT_INPUT
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UnknownVocab as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_VOCAB
    except TopologyMismatch as exc:
        if args.command == "assess":
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_TOPOLOGY
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SigLangError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
