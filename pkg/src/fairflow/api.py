"""HTTP service exposing the full engine: orders, monitoring, mappings,
forms, workflows, runs, repository browsing, search, and admin config.

Authentication is a static bearer-token table from config; every created
order or run carries the session's username and group, and non-admin
sessions only ever see their own group's data. Module errors surface as
4xx/5xx JSON bodies with a machine-readable ``error_code``.
"""

from __future__ import annotations

import logging
from datetime import datetime, timedelta
from pathlib import Path

from fastapi import Depends, FastAPI, Header, Query
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .analyzer import (
    InputSelection,
    OutputOptions,
    ParamField,
    RunRequest,
    WorkflowDefinition,
)
from .app import AppContext, Session
from .errors import FairflowError
from .importer import display_stage
from .provenance import ImportOrder, OrderStatus, RunProjection, WorkflowEvent
from .repo import KeyValueBlock, RepoObject

log = logging.getLogger("fairflow.api")

_STATUS_BY_CODE = {
    "UNAUTHENTICATED": 401,
    "NOT_ADMIN": 403,
    "PATH_ESCAPE": 403,
    "FORBIDDEN": 403,
    "UNKNOWN_ORDER": 404,
    "UNKNOWN_OBJECT": 404,
    "UNKNOWN_WORKFLOW": 404,
    "UNKNOWN_RUN": 404,
    "UNKNOWN_TEMPLATE": 404,
    "UNKNOWN_GROUP": 404,
    "UNKNOWN_JOB": 404,
    "UNKNOWN_LINK": 404,
    "UNKNOWN_PATH": 404,
    "DUPLICATE_NAME": 409,
    "SUBFOLDER_TAKEN": 409,
    "ALREADY_TERMINAL": 409,
    "FATAL_CONFIG": 500,
}

_TS_FORMAT = "%Y-%m-%dT%H:%M:%S.%f"


class OrderCreate(BaseModel):
    destination_id: int
    destination_type: str
    files: list[str]
    preprocessing: dict | None = None


class MappingCreate(BaseModel):
    group: str
    subfolder: str


class SubmissionCreate(BaseModel):
    form_id: str
    object_id: int
    values: dict
    form_version: int | None = None


class InputSelectionBody(BaseModel):
    container_id: int
    image_ids: list[int]


class OutputOptionsBody(BaseModel):
    target_dataset_id: int
    attach_zip: bool = False
    attach_tables: bool = False
    email_on_done: bool = False
    rename_pattern: str | None = None


class RunCreate(BaseModel):
    input_selection: InputSelectionBody
    output_options: OutputOptionsBody
    params: dict = {}
    version: str = ""


class AnalyzerConfigPut(BaseModel):
    workflows: list[dict]


class SessionCreate(BaseModel):
    token: str


def _order_json(o: ImportOrder) -> dict:
    return {
        "uuid": o.uuid,
        "group": o.group,
        "username": o.username,
        "destination_id": o.destination_id,
        "destination_type": o.destination_type,
        "files": list(o.files),
        "file_names": list(o.file_names),
        "preprocessing": o.preprocessing,
        "status": o.status.value,
        "created_at": o.created_at,
        "updated_at": o.updated_at,
        "error_message": o.error_message,
    }


def _elapsed_seconds(o: ImportOrder) -> int:
    start = datetime.strptime(o.created_at, _TS_FORMAT)
    end = datetime.strptime(o.updated_at, _TS_FORMAT)
    return int((end - start).total_seconds())


def _monitor_row(o: ImportOrder) -> dict:
    return {
        "uuid": o.uuid,
        "file_names": list(o.file_names),
        "stage": display_stage(o.status),
        "destination_id": o.destination_id,
        "destination_type": o.destination_type,
        "timestamp": o.created_at,
        "elapsed_time": _elapsed_seconds(o),
        "group_name": o.group,
        "error_message": o.error_message,
    }


def _object_json(obj: RepoObject) -> dict:
    return {
        "id": obj.id,
        "kind": obj.kind.value,
        "name": obj.name,
        "owner": obj.owner,
        "group": obj.group,
        "parent_id": obj.parent_id,
        "created_at": obj.created_at,
        "acquired_at": obj.acquired_at,
    }


def _block_json(block: KeyValueBlock) -> dict:
    return {
        "namespace": block.namespace,
        "pairs": [[k, v] for k, v in block.pairs],
        "created_at": block.created_at,
    }


def _workflow_json(d: WorkflowDefinition) -> dict:
    return {
        "name": d.name,
        "description": d.description,
        "github_repo": d.github_repo,
        "container_image": d.container_image,
        "job_script": d.job_script,
        "sbatch_params": {k: v for k, v in d.sbatch_params},
        "param_schema": [f.to_dict() for f in d.param_schema],
        "version": d.version,
    }


def _workflow_from_dict(raw: dict) -> WorkflowDefinition:
    return WorkflowDefinition.build(
        name=str(raw.get("name", "")),
        github_repo=str(raw.get("github_repo", "")),
        container_image=str(raw.get("container_image", "")),
        description=str(raw.get("description", "")),
        job_script=str(raw.get("job_script", "")),
        sbatch_params=raw.get("sbatch_params") or {},
        param_schema=[ParamField.from_dict(p) for p in raw.get("param_schema", [])],
    )


def _projection_json(p: RunProjection, ctx: AppContext) -> dict:
    return {
        "run_uuid": p.run_uuid,
        "user_id": p.user_id,
        "group_id": p.group_id,
        "user": ctx.repo.user_name(p.user_id),
        "group": ctx.repo.group_name(p.group_id),
        "name": p.name,
        "task": p.task,
        "status": p.status,
        "progress": p.progress,
        "start_time": p.start_time,
        "main_task_name": p.main_task_name,
    }


def _event_json(ev: WorkflowEvent) -> dict:
    return {
        "sequence": ev.sequence,
        "run_uuid": ev.run_uuid,
        "user_id": ev.user_id,
        "group_id": ev.group_id,
        "task_name": ev.task_name,
        "event_kind": ev.event_kind.value,
        "payload": ev.payload,
        "timestamp": ev.timestamp,
    }


def _date_range(date_str: str) -> tuple[str, str]:
    try:
        day = datetime.strptime(date_str, "%Y-%m-%d")
    except ValueError:
        raise FairflowError("VALIDATION_FAILED", f"bad date {date_str!r}, expected YYYY-MM-DD")
    nxt = day + timedelta(days=1)
    return (day.strftime("%Y-%m-%dT00:00:00.000000"), nxt.strftime("%Y-%m-%dT00:00:00.000000"))


def create_app(ctx: AppContext) -> FastAPI:
    app = FastAPI(title="fairflow", docs_url=None, redoc_url=None, openapi_url=None)

    @app.exception_handler(FairflowError)
    async def _domain_error(request, exc: FairflowError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(
            status_code=status, content={"error_code": exc.code, "message": exc.message}
        )

    def current_session(authorization: str | None = Header(default=None)) -> Session:
        if not authorization:
            raise FairflowError("UNAUTHENTICATED", "missing Authorization header")
        token = authorization.removeprefix("Bearer ").strip()
        return ctx.session_for_token(token)

    def admin_session(session: Session = Depends(current_session)) -> Session:
        if not session.is_admin:
            raise FairflowError("NOT_ADMIN", "this endpoint requires an admin session")
        return session

    def _require_same_group(session: Session, group: str) -> None:
        if not session.is_admin and group != session.group:
            raise FairflowError("FORBIDDEN", "object belongs to another group")

    # -- session ------------------------------------------------------------

    @app.post("/api/session")
    def open_session(body: SessionCreate):
        session = ctx.session_for_token(body.token)
        return {
            "username": session.username,
            "group": session.group,
            "is_admin": session.is_admin,
            "display_name": session.display_name,
        }

    # -- orders -------------------------------------------------------------

    @app.post("/api/orders", status_code=201)
    def create_order(body: OrderCreate, session: Session = Depends(current_session)):
        order = ctx.store.create_order(
            group=session.group,
            username=session.username,
            destination_id=body.destination_id,
            destination_type=body.destination_type,
            files=body.files,
            preprocessing=body.preprocessing,
        )
        return _order_json(order)

    @app.get("/api/orders")
    def list_orders(
        status: str | None = None,
        group: str | None = None,
        date: str | None = None,
        session: Session = Depends(current_session),
    ):
        if status is not None:
            try:
                OrderStatus(status)
            except ValueError:
                raise FairflowError("VALIDATION_FAILED", f"unknown status {status!r}")
        effective_group = session.group if not session.is_admin else group
        date_range = _date_range(date) if date else None
        orders = ctx.store.list_orders(
            status=status, group=effective_group, date_range=date_range
        )
        return [_order_json(o) for o in orders]

    @app.get("/api/orders/monitor")
    def monitor(
        date: str | None = None,
        group: str | None = None,
        session: Session = Depends(current_session),
    ):
        effective_group = session.group if not session.is_admin else group
        date_range = _date_range(date) if date else None
        orders = ctx.store.list_orders(group=effective_group, date_range=date_range)
        return [_monitor_row(o) for o in orders]

    # -- group mappings (admin) ------------------------------------------------

    @app.get("/api/admin/mappings")
    def list_mappings(session: Session = Depends(admin_session)):
        return [{"group": g, "subfolder": s} for g, s in ctx.store.list_mappings()]

    @app.post("/api/admin/mappings", status_code=201)
    def add_mapping(body: MappingCreate, session: Session = Depends(admin_session)):
        ctx.store.add_mapping(body.group, body.subfolder)
        return {"group": body.group, "subfolder": body.subfolder}

    @app.delete("/api/admin/mappings")
    def remove_mapping(group: str = Query(...), session: Session = Depends(admin_session)):
        ctx.store.remove_mapping(group)
        return {"removed": group}

    # -- remote browsing -----------------------------------------------------

    @app.get("/api/remote")
    def browse_remote(path: str = "", session: Session = Depends(current_session)):
        subfolder = ctx.store.mapping_for_group(session.group)
        if subfolder is None:
            raise FairflowError("UNMAPPED_GROUP", f"group {session.group!r} has no mapping")
        if path.startswith("/") or ".." in Path(path).parts:
            raise FairflowError("PATH_ESCAPE", f"path {path!r} leaves the group subfolder")
        base = (ctx.remote_root / subfolder).resolve()
        target = (base / path).resolve() if path else base
        if target != base and base not in target.parents:
            raise FairflowError("PATH_ESCAPE", f"path {path!r} leaves the group subfolder")
        if not target.is_dir():
            raise FairflowError("UNKNOWN_PATH", f"no such directory {path!r}")
        entries = []
        for child in sorted(target.iterdir(), key=lambda p: (not p.is_dir(), p.name)):
            rel_to_root = child.relative_to(ctx.remote_root.resolve())
            entries.append(
                {
                    "name": child.name,
                    "path": str(rel_to_root),
                    "is_dir": child.is_dir(),
                    "size": child.stat().st_size if child.is_file() else None,
                }
            )
        return {"path": path, "entries": entries}

    # -- forms ---------------------------------------------------------------

    @app.get("/api/forms/templates")
    def list_templates(form: str | None = None, session: Session = Depends(current_session)):
        templates = ctx.forms.list_templates(form)
        return [
            {
                "form_id": t.form_id,
                "version": t.version,
                "schema": t.schema,
                "published_by": t.published_by,
                "published_at": t.published_at,
            }
            for t in templates
        ]

    @app.post("/api/forms/templates", status_code=201)
    def publish_template(body: dict, session: Session = Depends(current_session)):
        # Plain dict body: "schema" is a reserved name in the model layer.
        form_id = str(body.get("form_id", ""))
        schema = body.get("schema")
        if not isinstance(schema, dict):
            raise FairflowError("MALFORMED_SCHEMA", "body needs a schema object")
        may_publish = session.is_admin or not bool(
            ctx.config.get("forms.admin_only_publish", True)
        )
        template = ctx.forms.publish_template(
            form_id, schema, session.username, is_admin=may_publish
        )
        return {
            "form_id": template.form_id,
            "version": template.version,
            "schema": template.schema,
        }

    @app.post("/api/forms/submissions", status_code=201)
    def submit_form(body: SubmissionCreate, session: Session = Depends(current_session)):
        obj = ctx.repo.get_object(body.object_id)
        _require_same_group(session, obj.group)
        submission = ctx.forms.submit(
            body.form_id,
            body.object_id,
            body.values,
            session.username,
            form_version=body.form_version,
        )
        return {
            "submission_id": submission.submission_id,
            "form_id": submission.form_id,
            "form_version": submission.form_version,
            "object_id": submission.object_id,
            "values": submission.values,
            "submitted_by": submission.submitted_by,
            "submitted_at": submission.submitted_at,
            "flattened": [[k, v] for k, v in ctx.forms.flatten_to_kv(submission)],
        }

    @app.get("/api/forms/history")
    def form_history(
        object: int = Query(...),
        form: str | None = None,
        session: Session = Depends(current_session),
    ):
        obj = ctx.repo.get_object(object)
        _require_same_group(session, obj.group)
        return [
            {
                "submission_id": s.submission_id,
                "form_id": s.form_id,
                "form_version": s.form_version,
                "object_id": s.object_id,
                "values": s.values,
                "submitted_by": s.submitted_by,
                "submitted_at": s.submitted_at,
            }
            for s in ctx.forms.history(object, form)
        ]

    # -- workflows and runs -----------------------------------------------------

    @app.get("/api/workflows")
    def list_workflows(filter: str | None = None, session: Session = Depends(current_session)):
        return [_workflow_json(d) for d in ctx.registry.list(filter)]

    @app.get("/api/workflows/{name}/form")
    def workflow_form(name: str, session: Session = Depends(current_session)):
        return {"workflow": name, "fields": ctx.registry.render_param_form(name)}

    @app.post("/api/workflows/{name}/runs", status_code=201)
    def start_run(name: str, body: RunCreate, session: Session = Depends(current_session)):
        request = RunRequest(
            workflow_name=name,
            input_selection=InputSelection(
                body.input_selection.container_id, tuple(body.input_selection.image_ids)
            ),
            output_options=OutputOptions(
                target_dataset_id=body.output_options.target_dataset_id,
                attach_zip=body.output_options.attach_zip,
                attach_tables=body.output_options.attach_tables,
                email_on_done=body.output_options.email_on_done,
                rename_pattern=body.output_options.rename_pattern,
            ),
            params=body.params,
            version=body.version,
        )
        run_uuid = ctx.engine.start_run(request, session.username, session.group)
        return {
            "run_uuid": run_uuid,
            "message": f"Script SLURM_Run_Workflow.py for {name} started successfully",
        }

    @app.get("/api/runs")
    def list_runs(
        workflow: str | None = None,
        group: str | None = None,
        date: str | None = None,
        session: Session = Depends(current_session),
    ):
        if session.is_admin:
            group_id = ctx.repo.ensure_group(group) if group else None
        else:
            group_id = ctx.repo.ensure_group(session.group)
        date_range = _date_range(date) if date else None
        projections = ctx.store.project_runs(
            workflow=workflow, group_id=group_id, date_range=date_range
        )
        return [_projection_json(p, ctx) for p in projections]

    @app.get("/api/runs/{run_uuid}")
    def get_run(run_uuid: str, session: Session = Depends(current_session)):
        projection = ctx.store.project_run(run_uuid)
        _require_same_group(session, ctx.repo.group_name(projection.group_id))
        events = [_event_json(ev) for ev in ctx.store.events(run_uuid)]
        return {"projection": _projection_json(projection, ctx), "events": events}

    # -- analyzer config (admin) ---------------------------------------------------

    @app.get("/api/admin/analyzer-config")
    def get_analyzer_config(session: Session = Depends(admin_session)):
        return {
            "workflows": [_workflow_json(d) for d in ctx.registry.list()],
            "ini": ctx.registry.ini_text(),
        }

    @app.put("/api/admin/analyzer-config")
    def put_analyzer_config(
        body: AnalyzerConfigPut, session: Session = Depends(admin_session)
    ):
        defs = [_workflow_from_dict(raw) for raw in body.workflows]
        ctx.registry.replace_all(defs)
        return {"workflows": [_workflow_json(d) for d in ctx.registry.list()]}

    # -- repository --------------------------------------------------------------

    @app.get("/api/repo/children")
    def repo_children(
        parent: int | None = None, session: Session = Depends(current_session)
    ):
        if parent is not None:
            obj = ctx.repo.get_object(parent)
            _require_same_group(session, obj.group)
        children = ctx.repo.list_children(parent)
        if not session.is_admin:
            children = [c for c in children if c.group == session.group]
        return [_object_json(c) for c in children]

    @app.get("/api/repo/annotations")
    def repo_annotations(
        object: int = Query(...), session: Session = Depends(current_session)
    ):
        obj = ctx.repo.get_object(object)
        _require_same_group(session, obj.group)
        return [_block_json(b) for b in ctx.repo.get_annotations(object)]

    @app.get("/api/search")
    def search(q: str = Query(...), session: Session = Depends(current_session)):
        group = None if session.is_admin else session.group
        return [_object_json(o) for o in ctx.repo.search_by_value(q, group=group)]

    # -- meta ---------------------------------------------------------------------

    @app.get("/api/routes")
    def routes():
        table = []
        for route in app.routes:
            path = getattr(route, "path", "")
            if not path.startswith("/api"):
                continue
            for method in sorted(getattr(route, "methods", ()) - {"HEAD", "OPTIONS"}):
                table.append({"method": method, "path": path})
        return sorted(table, key=lambda r: (r["path"], r["method"]))

    ui_dist = ctx.config.path("api.ui_dist")
    if ui_dist.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dist), html=True), name="ui")

    return app


def serve(ctx: AppContext) -> None:
    """Run the HTTP service plus the import daemon and analyzer ticker."""
    import uvicorn

    bind = str(ctx.config.get("api.bind_addr"))
    host, _, port = bind.partition(":")
    app = create_app(ctx)
    ctx.init_dirs()
    ctx.start_background()
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8344), log_level="warning")
    finally:
        ctx.stop_background()
