"""Command-line entry points: import, serve, simulate, engine stats."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import Engine
from .harness import CorpusSpec, HarnessConfig, run_simulated_teacher, write_report
from .raw_store import RawStore, import_items, read_jsonl
from .server import make_server
from .service import LoopService


def _cmd_import(args) -> int:
    manifest, report = import_items(
        read_jsonl(args.input), args.out, args.dataset, bucket_capacity=args.bucket_capacity
    )
    print(
        f"imported {report.imported} rows into {len(manifest.buckets)} buckets "
        f"({report.skipped} skipped) -> {Path(args.out) / args.dataset / 'manifest'}"
    )
    return 0


def _cmd_serve(args) -> int:
    store = RawStore.open(args.data, args.dataset)
    engine = Engine(store, shard_count=args.shards)
    service = LoopService(engine, Path(args.data) / args.dataset / "sessions")
    server = make_server(service, host=args.host, port=args.port)
    print(f"serving dataset {args.dataset!r} ({engine.row_count} rows, "
          f"{len(engine.shards)} shards) on http://{args.host}:{args.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def _cmd_simulate(args) -> int:
    raw = json.loads(Path(args.config).read_text("utf-8"))
    corpus = CorpusSpec(**raw.pop("corpus", {}))
    config = HarnessConfig(corpus=corpus, **raw)
    workdir = Path(args.workdir) if args.workdir else Path(args.out).parent / "simulate-work"
    report = run_simulated_teacher(config, workdir)
    write_report(report, args.out)
    reached = report.labels_to_target
    print(
        f"strategy={report.strategy} seed={report.seed} labels_used={report.labels_used} "
        f"labels_to_target={reached if reached is not None else 'not reached'} -> {args.out}"
    )
    return 0


def _cmd_engine_stats(args) -> int:
    store = RawStore.open(args.data, args.dataset)
    engine = Engine(store, shard_count=args.shards)
    stats = engine.stats()
    print(f"dataset {args.dataset}: {stats['rows']} rows")
    for shard in stats["shards"]:
        state = "live" if shard["alive"] else "dead"
        print(
            f"  shard {shard['shard_id']}: {shard['rows']} rows, "
            f"{shard['buckets']} buckets, ~{shard['resident_bytes_estimate']} bytes resident, {state}"
        )
    for column, freshness in stats["score_freshness"].items():
        print(f"  freshness {column}: {freshness}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelloop")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="import line-delimited JSON records into buckets")
    p.add_argument("--input", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--bucket-capacity", type=int, default=10_000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_import)

    p = sub.add_parser("serve", help="serve the interactive loop API")
    p.add_argument("--data", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--shards", type=int, default=4)
    p.add_argument("--port", type=int, default=8351)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("simulate", help="run the simulated-teacher harness")
    p.add_argument("--config", required=True, help="JSON harness configuration")
    p.add_argument("--out", required=True, help="where to write the report JSON")
    p.add_argument("--workdir", default=None)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("engine", help="engine diagnostics")
    engine_sub = p.add_subparsers(dest="engine_command", required=True)
    stats = engine_sub.add_parser("stats", help="print shard sizes and freshness")
    stats.add_argument("--data", required=True)
    stats.add_argument("--dataset", required=True)
    stats.add_argument("--shards", type=int, default=4)
    stats.set_defaults(fn=_cmd_engine_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
