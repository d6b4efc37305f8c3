"""Operator command line: init, check, submit-order, run-workflow,
export-events, and serve.

Every subcommand builds the same AppContext the HTTP service uses, so a
CLI-submitted order and an API-submitted order are persisted identically.
Config comes from ``--config <path>`` plus ``FAIRFLOW_``-prefixed
environment overrides; ``--json`` switches stdout to machine-readable
output. Exit code 0 on success, 1 with the module error name on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analyzer import InputSelection, OutputOptions, RunRequest
from .app import AppContext
from .config import Config
from .errors import FairflowError
from .repo import ObjectKind

log = logging.getLogger("fairflow.cli")

CHECK_ORDER = ("db", "remote", "runner", "scheduler")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairflow")
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init", help="create the database and directory layout")
    sub.add_parser("check", help="report PASS/FAIL per subsystem")

    p_submit = sub.add_parser("submit-order", help="submit an import order from a JSON file")
    p_submit.add_argument("json_file")

    p_run = sub.add_parser("run-workflow", help="start a registered workflow")
    p_run.add_argument("name")
    p_run.add_argument("--dataset", type=int, required=True,
                       help="dataset holding the input images")
    p_run.add_argument("--images", default="",
                       help="comma-separated image ids (default: all in the dataset)")
    p_run.add_argument("--target", type=int, default=None,
                       help="output dataset id (default: the input dataset)")
    p_run.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                       help="override one workflow parameter")
    p_run.add_argument("--user", default="cli")
    p_run.add_argument("--group", default="cli")
    p_run.add_argument("--wait", action="store_true",
                       help="drive the run to completion before exiting")

    p_export = sub.add_parser("export-events", help="write the event log as NDJSON")
    p_export.add_argument("out_file")

    sub.add_parser("serve", help="run the HTTP service with background workers")
    return parser


def _coerce_param(raw: str, ftype: str):
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def cmd_init(ctx: AppContext, as_json: bool) -> int:
    created = ctx.init_dirs()
    if as_json:
        print(json.dumps({"created": created}))
    else:
        for path in created:
            print(f"created {path}")
        if not created:
            print("nothing to do")
    return 0


def cmd_check(ctx: AppContext, as_json: bool) -> int:
    results = ctx.check()
    ordered = {name: results.get(name, False) for name in CHECK_ORDER}
    if as_json:
        print(json.dumps(ordered))
    else:
        for name, ok in ordered.items():
            print(f"{name}={'PASS' if ok else 'FAIL'}")
    return 0 if all(ordered.values()) else 1


def cmd_submit_order(ctx: AppContext, json_file: str, as_json: bool) -> int:
    body = json.loads(Path(json_file).read_text(encoding="utf-8"))
    order = ctx.store.create_order(
        group=body["group"],
        username=body["username"],
        destination_id=body["destination_id"],
        destination_type=body["destination_type"],
        files=body["files"],
        preprocessing=body.get("preprocessing"),
    )
    if as_json:
        print(json.dumps({"uuid": order.uuid, "status": order.status.value}))
    else:
        print(order.uuid)
    return 0


def cmd_run_workflow(ctx: AppContext, args, as_json: bool) -> int:
    workflow = ctx.registry.get(args.name)
    if args.images:
        image_ids = tuple(int(x) for x in args.images.split(",") if x.strip())
    else:
        children = ctx.repo.list_children(args.dataset)
        image_ids = tuple(c.id for c in children if c.kind is ObjectKind.IMAGE)
    params = {}
    types = {f.name: f.type for f in workflow.param_schema}
    for item in args.param:
        name, _, raw = item.partition("=")
        if name not in types:
            raise FairflowError("VALIDATION_FAILED", f"unknown param {name!r}")
        params[name] = _coerce_param(raw, types[name])
    request = RunRequest(
        workflow_name=args.name,
        input_selection=InputSelection(args.dataset, image_ids),
        output_options=OutputOptions(target_dataset_id=args.target or args.dataset),
        params=params,
    )
    run_uuid = ctx.engine.start_run(request, args.user, args.group)
    if args.wait:
        ctx.engine.run_to_completion(run_uuid)
    if as_json:
        print(json.dumps({"run_uuid": run_uuid}))
    else:
        print(run_uuid)
    return 0


def cmd_export_events(ctx: AppContext, out_file: str, as_json: bool) -> int:
    count = ctx.store.export_events(out_file)
    if as_json:
        print(json.dumps({"events": count, "path": out_file}))
    else:
        print(f"exported {count} events to {out_file}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = Config.load(args.config)
        ctx = AppContext(config)
    except FairflowError as exc:
        print(exc.code, file=sys.stderr)
        return 1
    try:
        if args.command == "init":
            return cmd_init(ctx, args.json)
        if args.command == "check":
            return cmd_check(ctx, args.json)
        if args.command == "submit-order":
            return cmd_submit_order(ctx, args.json_file, args.json)
        if args.command == "run-workflow":
            return cmd_run_workflow(ctx, args, args.json)
        if args.command == "export-events":
            return cmd_export_events(ctx, args.out_file, args.json)
        if args.command == "serve":
            from .api import serve

            serve(ctx)
            return 0
        return 1
    except FairflowError as exc:
        print(exc.code, file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if args.command != "serve":
            ctx.close()


if __name__ == "__main__":
    sys.exit(main())
