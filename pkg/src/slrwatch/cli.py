"""Command line interface: one subcommand per engine operation.

Human-readable output by default; --porcelain prints the same data as JSON
for scripting. All state lives in the data directory (--data-dir or the
SLRWATCH_DATA environment variable).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .biblio import parse_bib
from .decision import Answer
from .engine import Engine, EngineConfig, EngineError
from .registry import Protocol, ReviewStatus, ReviewVersion
from .screening import Verdict

logger = logging.getLogger(__name__)

USER_ERRORS = (EngineError, ValueError, OSError)


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _load_records(path: str | None):
    if path is None:
        return []
    records, _ = parse_bib(Path(path).read_text(encoding="utf-8"), mode="strict")
    return records


def _engine(args) -> Engine:
    return Engine(args.data_dir)


def _emit(args, data, human: str | list[str]) -> None:
    if args.porcelain:
        print(json.dumps(data, indent=2, sort_keys=True))
    elif isinstance(human, list):
        for line in human:
            print(line)
    else:
        print(human)


def _candidate_line(candidate: dict) -> str:
    record = candidate["record"]
    flags = []
    if candidate.get("title_only"):
        flags.append("title-only")
    if candidate.get("trend"):
        flags.append("trend")
    suffix = f" ({', '.join(flags)})" if flags else ""
    return (f"{record['id']}  score {candidate['score']}  {record['year']}  "
            f"{record['title']} [{candidate['state']}]{suffix}")


# -- command implementations


def cmd_init(args) -> int:
    config = EngineConfig()
    if args.fixture_graph:
        config = dataclasses.replace(
            config, source={"kind": "fixture", "path": args.fixture_graph})
    Engine.init(args.data_dir, config)
    _emit(args, {"data_dir": str(args.data_dir)},
          f"initialized data directory {args.data_dir}")
    return 0


def cmd_register(args) -> int:
    engine = _engine(args)
    version = ReviewVersion.from_dict(_load_json(args.version_file))
    records = _load_records(args.records_file)
    lineage = engine.register_review(args.lineage, version, records)
    node = engine.get_state(args.lineage).node.value
    _emit(args, {**lineage.to_dict(), "node": node},
          f"registered lineage {lineage.id} (node {node})")
    return 0


def cmd_link_version(args) -> int:
    engine = _engine(args)
    version = ReviewVersion.from_dict(_load_json(args.version_file))
    records = _load_records(args.records_file)
    lineage = engine.link_version(args.lineage, version, records)
    node = engine.get_state(args.lineage).node.value
    _emit(args, {**lineage.to_dict(), "node": node},
          f"linked version {version.id} to {lineage.id} (node {node})")
    return 0


def cmd_import_protocol(args) -> int:
    engine = _engine(args)
    protocol = Protocol.from_dict(_load_json(args.file))
    engine.set_protocol(args.lineage, args.version, protocol)
    _emit(args, protocol.to_dict(),
          f"protocol set on {args.lineage}/{args.version}")
    return 0


def cmd_run_iteration(args) -> int:
    engine = _engine(args)
    iteration = engine.run_iteration(args.lineage)
    node = engine.get_state(args.lineage).node.value
    if iteration["status"] == "failed":
        _emit(args, iteration,
              f"{iteration['id']}: failed: {iteration['error']} (node {node})")
        return 1
    _emit(args, iteration,
          f"{iteration['id']}: raw {iteration['raw_hits']} -> window "
          f"{iteration['window_hits']} -> new {iteration['new_unique']} "
          f"(node {node})")
    return 0


def cmd_queue(args) -> int:
    engine = _engine(args)
    queue = [c.to_dict() for c in engine.screening_queue(args.lineage)]
    _emit(args, queue,
          [_candidate_line(c) for c in queue] or ["queue is empty"])
    return 0


def cmd_decide(args) -> int:
    engine = _engine(args)
    criteria = tuple(c for c in (args.criteria or "").split(",") if c)
    candidate = engine.record_decision(
        args.lineage, args.record, args.reviewer, Verdict(args.verdict),
        criteria=criteria, rationale=args.rationale,
        is_consensus=args.consensus,
    )
    data = candidate.to_dict()
    _emit(args, data,
          f"{args.record}: {data['state']}"
          + (f" ({data['resolution']})" if data.get("resolution") else ""))
    return 0


def cmd_trend(args) -> int:
    engine = _engine(args)
    candidate = engine.mark_trend(args.lineage, args.record, args.actor,
                                  note=args.note, flagged=not args.off)
    word = "flagged" if candidate.trend else "unflagged"
    _emit(args, candidate.to_dict(), f"{args.record}: trend {word}")
    return 0


def cmd_session(args) -> int:
    engine = _engine(args)
    if args.action == "open":
        session = engine.open_session(args.lineage)
        _emit(args, session.to_dict(),
              f"{session.id} opened; next step {session.next_index}")
        return 0
    if args.action == "answer":
        session = engine.answer_step(
            args.lineage, args.index, Answer(args.answer),
            by=args.by, rationale=args.rationale)
        if session.outcome.value != "pending":
            _emit(args, session.to_dict(),
                  f"{session.id}: outcome {session.outcome.value}")
        else:
            _emit(args, session.to_dict(),
                  f"{session.id}: step {args.index} recorded; "
                  f"next step {session.next_index}")
        return 0
    session = engine.evaluate_session(args.lineage)
    _emit(args, session.to_dict(), f"{session.id}: outcome {session.outcome.value}")
    return 0


def cmd_export(args) -> int:
    engine = _engine(args)
    document = engine.export_bundle(args.lineage)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        _emit(args, {"path": args.out}, f"wrote bundle to {args.out}")
    else:
        print(document, end="")
    return 0


def cmd_deposit(args) -> int:
    engine = _engine(args)
    record = engine.deposit_bundle(args.lineage)
    node = engine.get_state(args.lineage).node.value
    _emit(args, record.to_dict(),
          f"{record.id}: {record.archive_name}:{record.archive_reference} "
          f"(node {node})")
    return 0


def cmd_status(args) -> int:
    engine = _engine(args)
    ids = [args.lineage] if args.lineage else engine.storage.list_lineages()
    rows = [engine.metrics(lineage_id) for lineage_id in ids]
    lines = []
    for m in rows:
        counts = m["candidates_by_state"]
        lines.append(
            f"{m['lineage_id']}: node={m['node']} status={m['status']} "
            f"included={counts['included']} deposited={counts['deposited']} "
            f"queued={counts['prescreened'] + counts['needs_consensus']} "
            f"trend={m['trend_count']} deposits={m['deposits']}"
        )
    _emit(args, rows, lines or ["no lineages registered"])
    return 0


def cmd_flag(args) -> int:
    engine = _engine(args)
    lineage = engine.flag_review(args.lineage, ReviewStatus(args.status))
    node = engine.get_state(args.lineage).node.value
    _emit(args, {**lineage.to_dict(), "node": node},
          f"{lineage.id}: status {lineage.status.value} (node {node})")
    return 0


def cmd_notify(args) -> int:
    engine = _engine(args)
    receipts = engine.notify(args.lineage, message=args.message)
    data = [{"contact": r.contact, "sink": r.sink, "ok": r.ok, "detail": r.detail}
            for r in receipts]
    lines = [f"{r['contact']}: {'ok' if r['ok'] else 'FAILED'} ({r['detail']})"
             for r in data] or ["no contacts on file (warning event logged)"]
    _emit(args, data, lines)
    return 0 if all(r["ok"] for r in data) else 1


def cmd_update_published(args) -> int:
    engine = _engine(args)
    lineage = engine.update_published(args.lineage)
    node = engine.get_state(args.lineage).node.value
    _emit(args, {**lineage.to_dict(), "node": node},
          f"{lineage.id}: update recorded, surveillance restarts (node {node})")
    return 0


def cmd_tick(args) -> int:
    engine = _engine(args)
    ran = engine.tick()
    _emit(args, ran,
          [f"{it['id']}: {it['status']}" for it in ran] or ["nothing was due"])
    return 0


def cmd_events(args) -> int:
    engine = _engine(args)
    events = [e.to_dict() for e in engine.events_since(args.lineage, args.after_seq)]
    lines = [f"{e['seq']:4d}  {e['at']}  {e['kind']}  {json.dumps(e['payload'])}"
             for e in events]
    _emit(args, events, lines or ["no events"])
    return 0


def cmd_replay(args) -> int:
    engine = _engine(args)
    result = engine.replay_state(args.lineage)
    _emit(args, result,
          f"log replay: node {result['replayed_node']} vs live "
          f"{result['live_node']}; status {result['replayed_status']} vs "
          f"{result['live_status']} -> "
          f"{'match' if result['match'] else 'MISMATCH'}")
    return 0 if result["match"] else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(engine=_engine(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# -- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slrwatch",
        description="Watch published literature reviews for new evidence.")
    parser.add_argument("--data-dir", default=os.environ.get("SLRWATCH_DATA", "."),
                        help="data directory (default: $SLRWATCH_DATA or .)")
    parser.add_argument("--porcelain", action="store_true",
                        help="machine-readable JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a data directory")
    p.add_argument("--fixture-graph", help="use a citation-graph file as the source")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("register", help="register a review lineage")
    p.add_argument("--lineage", required=True)
    p.add_argument("--version-file", required=True, help="review version JSON")
    p.add_argument("--records-file", help="BibTeX file with the included studies")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("link-version", help="attach an update or replication")
    p.add_argument("--lineage", required=True)
    p.add_argument("--version-file", required=True)
    p.add_argument("--records-file")
    p.set_defaults(func=cmd_link_version)

    p = sub.add_parser("import-protocol", help="set a version's protocol")
    p.add_argument("--lineage", required=True)
    p.add_argument("--version", required=True)
    p.add_argument("--file", required=True, help="protocol JSON")
    p.set_defaults(func=cmd_import_protocol)

    p = sub.add_parser("run-iteration", help="run one snowball iteration now")
    p.add_argument("--lineage", required=True)
    p.set_defaults(func=cmd_run_iteration)

    p = sub.add_parser("queue", help="show candidates awaiting screening")
    p.add_argument("--lineage", required=True)
    p.set_defaults(func=cmd_queue)

    p = sub.add_parser("decide", help="record a screening verdict")
    p.add_argument("--lineage", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--reviewer", required=True)
    p.add_argument("--verdict", required=True,
                   choices=[v.value for v in Verdict])
    p.add_argument("--criteria", help="comma-separated criterion ids")
    p.add_argument("--rationale")
    p.add_argument("--consensus", action="store_true",
                   help="record as the consensus resolution of a conflict")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("trend", help="flag a candidate as a trend signal")
    p.add_argument("--lineage", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--actor", required=True)
    p.add_argument("--note")
    p.add_argument("--off", action="store_true", help="remove the flag")
    p.set_defaults(func=cmd_trend)

    p = sub.add_parser("session", help="update-decision checklist sessions")
    p.add_argument("action", choices=["open", "answer", "evaluate"])
    p.add_argument("--lineage", required=True)
    p.add_argument("--index", type=int, help="step number (answer)")
    p.add_argument("--answer", choices=[a.value for a in Answer])
    p.add_argument("--by", help="who answered (answer)")
    p.add_argument("--rationale")
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("export", help="render the evidence bundle")
    p.add_argument("--lineage", required=True)
    p.add_argument("--out", help="write to a file instead of stdout")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("deposit", help="store the evidence bundle in the archive")
    p.add_argument("--lineage", required=True)
    p.set_defaults(func=cmd_deposit)

    p = sub.add_parser("status", help="one-line summary per lineage")
    p.add_argument("--lineage")
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("flag", help="move the review status flag")
    p.add_argument("--lineage", required=True)
    p.add_argument("--status", required=True,
                   choices=[s.value for s in ReviewStatus])
    p.set_defaults(func=cmd_flag)

    p = sub.add_parser("notify", help="tell the review's contacts")
    p.add_argument("--lineage", required=True)
    p.add_argument("--message")
    p.set_defaults(func=cmd_notify)

    p = sub.add_parser("update-published",
                       help="record that the manual update shipped")
    p.add_argument("--lineage", required=True)
    p.set_defaults(func=cmd_update_published)

    p = sub.add_parser("tick", help="run every lineage whose iteration is due")
    p.set_defaults(func=cmd_tick)

    p = sub.add_parser("events", help="show the event log")
    p.add_argument("--lineage", required=True)
    p.add_argument("--after-seq", type=int, default=0)
    p.set_defaults(func=cmd_events)

    p = sub.add_parser("replay", help="check live state against log replay")
    p.add_argument("--lineage", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "session" and args.action == "answer":
        missing = [name for name in ("index", "answer", "by")
                   if getattr(args, name) is None]
        if missing:
            print(f"error: session answer requires --{', --'.join(missing)}",
                  file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
