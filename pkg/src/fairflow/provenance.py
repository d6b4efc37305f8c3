"""System of record: import orders, group mappings, and the workflow event log.

Orders move through a five-state lifecycle with a fixed transition graph;
workers take work by an atomic claim (compare-and-set on status) so an order
is processed exactly once no matter how many workers poll. Workflow history
is an append-only event log; every run-level view is a pure fold over it.
"""

from __future__ import annotations

import json
import logging
import posixpath
import uuid as uuid_mod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .db import Database, utc_now
from .errors import FairflowError

log = logging.getLogger("fairflow.provenance")


class OrderStatus(str, Enum):
    PENDING = "PENDING"
    STARTED = "STARTED"
    PREPROCESSING = "PREPROCESSING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"


# The only legal edges. Terminal states have no successors.
_TRANSITIONS: dict[OrderStatus, set[OrderStatus]] = {
    OrderStatus.PENDING: {OrderStatus.STARTED},
    OrderStatus.STARTED: {OrderStatus.PREPROCESSING, OrderStatus.COMPLETED, OrderStatus.FAILED},
    OrderStatus.PREPROCESSING: {OrderStatus.COMPLETED, OrderStatus.FAILED},
    OrderStatus.COMPLETED: set(),
    OrderStatus.FAILED: set(),
}

TERMINAL_STATUSES = {OrderStatus.COMPLETED, OrderStatus.FAILED}

DESTINATION_TYPES = ("Dataset", "Screen")


class EventKind(str, Enum):
    RUN_CREATED = "RUN_CREATED"
    TASK_STARTED = "TASK_STARTED"
    JOB_SUBMITTED = "JOB_SUBMITTED"
    STATUS_UPDATE = "STATUS_UPDATE"
    PROGRESS_UPDATE = "PROGRESS_UPDATE"
    RESULT_ATTACHED = "RESULT_ATTACHED"
    TASK_DONE = "TASK_DONE"
    TASK_FAILED = "TASK_FAILED"


@dataclass(frozen=True)
class ImportOrder:
    uuid: str
    group: str
    username: str
    destination_id: int
    destination_type: str
    files: tuple[str, ...]
    file_names: tuple[str, ...]
    preprocessing: dict | None
    status: OrderStatus
    created_at: str
    updated_at: str
    error_message: str | None = None


@dataclass(frozen=True)
class WorkflowEvent:
    sequence: int
    run_uuid: str
    user_id: int
    group_id: int
    task_name: str
    event_kind: EventKind
    payload: dict[str, str]
    timestamp: str


@dataclass
class RunProjection:
    """Current state of one run, derived purely from its events."""

    run_uuid: str
    user_id: int
    group_id: int
    name: str = "Slurm Workflow"
    task: str = ""
    status: str = ""
    progress: float = 0.0
    start_time: str = ""
    main_task_name: str = ""


def _to_float(raw: str) -> float | None:
    try:
        return float(raw)
    except (TypeError, ValueError):
        return None


def apply_event(proj: RunProjection | None, ev: WorkflowEvent) -> RunProjection:
    """Fold one event into a run projection. Total: any event sequence folds."""
    if proj is None:
        proj = RunProjection(
            run_uuid=ev.run_uuid,
            user_id=ev.user_id,
            group_id=ev.group_id,
            task=ev.task_name,
            start_time=ev.timestamp,
            main_task_name=ev.task_name,
        )
    if ev.event_kind is EventKind.RUN_CREATED:
        proj.name = ev.payload.get("name", proj.name)
        proj.main_task_name = ev.payload.get("main_task_name", ev.task_name)
        proj.task = ev.task_name
        proj.start_time = ev.timestamp
    elif ev.event_kind is EventKind.TASK_STARTED:
        proj.task = ev.task_name
    elif ev.event_kind is EventKind.STATUS_UPDATE:
        if "status" in ev.payload:
            proj.status = ev.payload["status"]
        got = _to_float(ev.payload.get("progress", ""))
        if got is not None:
            proj.progress = got
    elif ev.event_kind is EventKind.PROGRESS_UPDATE:
        got = _to_float(ev.payload.get("progress", ""))
        if got is not None:
            proj.progress = got
    elif ev.event_kind is EventKind.TASK_DONE:
        proj.status = "DONE"
        proj.progress = 100.0
    elif ev.event_kind is EventKind.TASK_FAILED:
        proj.status = "FAILED"
        proj.progress = 0.0
    # JOB_SUBMITTED and RESULT_ATTACHED carry audit detail only.
    return proj


class Projector:
    """Incremental fold over the whole event stream, one run per key.

    Feeding events one at a time must land on exactly the state a fresh
    replay of the full log produces; tests hold this as an invariant.
    """

    def __init__(self):
        self.runs: dict[str, RunProjection] = {}
        self.last_sequence = 0

    def apply(self, ev: WorkflowEvent) -> RunProjection:
        self.runs[ev.run_uuid] = apply_event(self.runs.get(ev.run_uuid), ev)
        self.last_sequence = ev.sequence
        return self.runs[ev.run_uuid]


_SCHEMA = """
CREATE TABLE IF NOT EXISTS orders (
    uuid TEXT PRIMARY KEY,
    grp TEXT NOT NULL,
    username TEXT NOT NULL,
    destination_id INTEGER NOT NULL,
    destination_type TEXT NOT NULL,
    files_json TEXT NOT NULL,
    file_names_json TEXT NOT NULL,
    preprocessing_json TEXT,
    status TEXT NOT NULL,
    created_at TEXT NOT NULL,
    updated_at TEXT NOT NULL,
    error_message TEXT
);
CREATE INDEX IF NOT EXISTS idx_orders_claim ON orders(status, created_at, uuid);
CREATE TABLE IF NOT EXISTS group_mappings (
    grp TEXT PRIMARY KEY,
    subfolder TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS events (
    sequence INTEGER PRIMARY KEY AUTOINCREMENT,
    run_uuid TEXT NOT NULL,
    user_id INTEGER NOT NULL,
    group_id INTEGER NOT NULL,
    task_name TEXT NOT NULL,
    event_kind TEXT NOT NULL,
    payload_json TEXT NOT NULL,
    timestamp TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_events_run ON events(run_uuid, sequence);
"""


class ProvenanceStore:
    def __init__(self, db: Database):
        self.db = db
        db.executescript(_SCHEMA)

    # -- group mappings ----------------------------------------------------

    def add_mapping(self, group: str, subfolder: str) -> None:
        if not group or not subfolder:
            raise FairflowError("UNKNOWN_GROUP", "group and subfolder must be non-empty")
        with self.db.tx() as cur:
            existing = cur.execute(
                "SELECT grp FROM group_mappings WHERE subfolder = ? AND grp != ?",
                (subfolder, group),
            ).fetchone()
            if existing:
                raise FairflowError(
                    "SUBFOLDER_TAKEN",
                    f"subfolder {subfolder!r} already mapped to group {existing['grp']!r}",
                )
            cur.execute(
                "INSERT INTO group_mappings(grp, subfolder) VALUES(?, ?) "
                "ON CONFLICT(grp) DO UPDATE SET subfolder = excluded.subfolder",
                (group, subfolder),
            )

    def remove_mapping(self, group: str) -> None:
        with self.db.tx() as cur:
            cur.execute("DELETE FROM group_mappings WHERE grp = ?", (group,))
            if cur.rowcount == 0:
                raise FairflowError("UNKNOWN_GROUP", f"no mapping for group {group!r}")

    def mapping_for_group(self, group: str) -> str | None:
        row = self.db.query_one("SELECT subfolder FROM group_mappings WHERE grp = ?", (group,))
        return row["subfolder"] if row else None

    def list_mappings(self) -> list[tuple[str, str]]:
        rows = self.db.query("SELECT grp, subfolder FROM group_mappings ORDER BY grp")
        return [(r["grp"], r["subfolder"]) for r in rows]

    # -- import orders -------------------------------------------------------

    def create_order(
        self,
        group: str,
        username: str,
        destination_id: int,
        destination_type: str,
        files: Iterable[str],
        preprocessing: dict | None = None,
    ) -> ImportOrder:
        files = tuple(files)
        if not files:
            raise FairflowError("EMPTY_FILESET", "an order must reference at least one file")
        if destination_type not in DESTINATION_TYPES:
            raise FairflowError(
                "ILLEGAL_DESTINATION",
                f"destination_type must be one of {DESTINATION_TYPES}, got {destination_type!r}",
            )
        subfolder = self.mapping_for_group(group)
        if subfolder is None:
            raise FairflowError("UNMAPPED_GROUP", f"group {group!r} has no subfolder mapping")
        for f in files:
            if not _path_under_subfolder(f, subfolder):
                raise FairflowError(
                    "PATH_OUTSIDE_GROUP",
                    f"file {f!r} is outside the subfolder mapped to group {group!r}",
                )
        now = utc_now()
        order = ImportOrder(
            uuid=str(uuid_mod.uuid4()),
            group=group,
            username=username,
            destination_id=int(destination_id),
            destination_type=destination_type,
            files=files,
            file_names=tuple(posixpath.basename(f) for f in files),
            preprocessing=dict(preprocessing) if preprocessing else None,
            status=OrderStatus.PENDING,
            created_at=now,
            updated_at=now,
        )
        with self.db.tx() as cur:
            cur.execute(
                "INSERT INTO orders(uuid, grp, username, destination_id, destination_type,"
                " files_json, file_names_json, preprocessing_json, status, created_at,"
                " updated_at, error_message) VALUES(?,?,?,?,?,?,?,?,?,?,?,?)",
                (
                    order.uuid,
                    order.group,
                    order.username,
                    order.destination_id,
                    order.destination_type,
                    json.dumps(list(order.files)),
                    json.dumps(list(order.file_names)),
                    json.dumps(order.preprocessing) if order.preprocessing else None,
                    order.status.value,
                    order.created_at,
                    order.updated_at,
                    None,
                ),
            )
        log.info("order created uuid=%s group=%s files=%d", order.uuid, group, len(files))
        return order

    def get_order(self, order_uuid: str) -> ImportOrder:
        row = self.db.query_one("SELECT * FROM orders WHERE uuid = ?", (order_uuid,))
        if row is None:
            raise FairflowError("UNKNOWN_ORDER", f"no order {order_uuid!r}")
        return _row_to_order(row)

    def claim_next_pending(self) -> ImportOrder | None:
        """Atomically move the oldest PENDING order to STARTED and return it.

        Returns None when nothing is pending. The compare-and-set on status
        guarantees two concurrent claimers never get the same order.
        """
        with self.db.tx() as cur:
            row = cur.execute(
                "SELECT uuid FROM orders WHERE status = ? ORDER BY created_at, uuid LIMIT 1",
                (OrderStatus.PENDING.value,),
            ).fetchone()
            if row is None:
                return None
            cur.execute(
                "UPDATE orders SET status = ?, updated_at = ? WHERE uuid = ? AND status = ?",
                (OrderStatus.STARTED.value, utc_now(), row["uuid"], OrderStatus.PENDING.value),
            )
            if cur.rowcount != 1:
                return None
            got = cur.execute("SELECT * FROM orders WHERE uuid = ?", (row["uuid"],)).fetchone()
        return _row_to_order(got)

    def update_order_status(
        self, order_uuid: str, status: OrderStatus | str, error_message: str | None = None
    ) -> ImportOrder:
        status = OrderStatus(status)
        if status is OrderStatus.FAILED and not error_message:
            raise FairflowError(
                "FAILED_WITHOUT_MESSAGE", "FAILED requires a non-empty error_message"
            )
        if status is not OrderStatus.FAILED and error_message:
            raise FairflowError(
                "MESSAGE_WITHOUT_FAILURE", "error_message is only allowed with FAILED"
            )
        with self.db.tx() as cur:
            row = cur.execute("SELECT * FROM orders WHERE uuid = ?", (order_uuid,)).fetchone()
            if row is None:
                raise FairflowError("UNKNOWN_ORDER", f"no order {order_uuid!r}")
            current = OrderStatus(row["status"])
            if status not in _TRANSITIONS[current]:
                raise FairflowError(
                    "ILLEGAL_TRANSITION", f"{current.value} cannot move to {status.value}"
                )
            cur.execute(
                "UPDATE orders SET status = ?, updated_at = ?, error_message = ? WHERE uuid = ?",
                (status.value, utc_now(), error_message, order_uuid),
            )
            got = cur.execute("SELECT * FROM orders WHERE uuid = ?", (order_uuid,)).fetchone()
        return _row_to_order(got)

    def list_orders(
        self,
        status: OrderStatus | str | None = None,
        group: str | None = None,
        date_range: tuple[str, str] | None = None,
    ) -> list[ImportOrder]:
        sql = "SELECT * FROM orders"
        clauses, params = [], []
        if status is not None:
            clauses.append("status = ?")
            params.append(OrderStatus(status).value)
        if group is not None:
            clauses.append("grp = ?")
            params.append(group)
        if date_range is not None:
            clauses.append("created_at >= ? AND created_at < ?")
            params.extend(date_range)
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY created_at DESC, uuid DESC"
        return [_row_to_order(r) for r in self.db.query(sql, tuple(params))]

    # -- workflow events -----------------------------------------------------

    def append_event(
        self,
        run_uuid: str,
        user_id: int,
        group_id: int,
        task_name: str,
        event_kind: EventKind | str,
        payload: Mapping[str, str] | None = None,
    ) -> WorkflowEvent:
        try:
            uuid_mod.UUID(run_uuid)
        except (ValueError, AttributeError, TypeError):
            raise FairflowError("MALFORMED_RUN_UUID", f"not a UUID: {run_uuid!r}")
        kind = EventKind(event_kind)
        payload = dict(payload or {})
        for k, v in payload.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise FairflowError(
                    "MALFORMED_PAYLOAD", "event payloads are flat string-to-string maps"
                )
        ts = utc_now()
        with self.db.tx() as cur:
            cur.execute(
                "INSERT INTO events(run_uuid, user_id, group_id, task_name, event_kind,"
                " payload_json, timestamp) VALUES(?,?,?,?,?,?,?)",
                (run_uuid, int(user_id), int(group_id), task_name, kind.value,
                 json.dumps(payload), ts),
            )
            seq = cur.lastrowid
        return WorkflowEvent(seq, run_uuid, int(user_id), int(group_id), task_name, kind, payload, ts)

    def events(self, run_uuid: str | None = None, after: int = 0) -> Iterator[WorkflowEvent]:
        if run_uuid is None:
            rows = self.db.query(
                "SELECT * FROM events WHERE sequence > ? ORDER BY sequence", (after,)
            )
        else:
            rows = self.db.query(
                "SELECT * FROM events WHERE run_uuid = ? AND sequence > ? ORDER BY sequence",
                (run_uuid, after),
            )
        for r in rows:
            yield _row_to_event(r)

    def project_run(self, run_uuid: str) -> RunProjection:
        proj: RunProjection | None = None
        for ev in self.events(run_uuid):
            proj = apply_event(proj, ev)
        if proj is None:
            raise FairflowError("UNKNOWN_RUN", f"no events for run {run_uuid!r}")
        return proj

    def project_runs(
        self,
        workflow: str | None = None,
        group_id: int | None = None,
        user_id: int | None = None,
        date_range: tuple[str, str] | None = None,
    ) -> list[RunProjection]:
        projector = Projector()
        for ev in self.events():
            projector.apply(ev)
        out = []
        for proj in projector.runs.values():
            if workflow is not None and proj.main_task_name != workflow:
                continue
            if group_id is not None and proj.group_id != group_id:
                continue
            if user_id is not None and proj.user_id != user_id:
                continue
            if date_range is not None and not (date_range[0] <= proj.start_time < date_range[1]):
                continue
            out.append(proj)
        out.sort(key=lambda p: p.start_time, reverse=True)
        return out

    # -- audit export ----------------------------------------------------------

    def export_events(self, out_path: str | Path) -> int:
        """Write the full log as NDJSON, one event per line, sequence order."""
        count = 0
        with open(out_path, "w", encoding="utf-8") as fh:
            for ev in self.events():
                fh.write(_event_line(ev))
                fh.write("\n")
                count += 1
        return count

    def import_events(self, in_path: str | Path) -> int:
        """Load an NDJSON export, preserving sequence numbers exactly."""
        count = 0
        with open(in_path, "r", encoding="utf-8") as fh, self.db.tx() as cur:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                cur.execute(
                    "INSERT INTO events(sequence, run_uuid, user_id, group_id, task_name,"
                    " event_kind, payload_json, timestamp) VALUES(?,?,?,?,?,?,?,?)",
                    (
                        obj["sequence"],
                        obj["run_uuid"],
                        obj["user_id"],
                        obj["group_id"],
                        obj["task_name"],
                        obj["event_kind"],
                        json.dumps(obj["payload"]),
                        obj["timestamp"],
                    ),
                )
                count += 1
        return count


def _event_line(ev: WorkflowEvent) -> str:
    return json.dumps(
        {
            "sequence": ev.sequence,
            "run_uuid": ev.run_uuid,
            "user_id": ev.user_id,
            "group_id": ev.group_id,
            "task_name": ev.task_name,
            "event_kind": ev.event_kind.value,
            "payload": ev.payload,
            "timestamp": ev.timestamp,
        }
    )


def _path_under_subfolder(path: str, subfolder: str) -> bool:
    """True iff the relative path stays inside the group's subfolder."""
    if not path or path.startswith("/") or "\\" in path or ":" in path:
        return False
    norm = posixpath.normpath(path)
    parts = norm.split("/")
    if ".." in parts or norm == subfolder:
        return False
    return parts[0] == subfolder


def _row_to_order(row) -> ImportOrder:
    return ImportOrder(
        uuid=row["uuid"],
        group=row["grp"],
        username=row["username"],
        destination_id=row["destination_id"],
        destination_type=row["destination_type"],
        files=tuple(json.loads(row["files_json"])),
        file_names=tuple(json.loads(row["file_names_json"])),
        preprocessing=json.loads(row["preprocessing_json"]) if row["preprocessing_json"] else None,
        status=OrderStatus(row["status"]),
        created_at=row["created_at"],
        updated_at=row["updated_at"],
        error_message=row["error_message"],
    )


def _row_to_event(row) -> WorkflowEvent:
    return WorkflowEvent(
        sequence=row["sequence"],
        run_uuid=row["run_uuid"],
        user_id=row["user_id"],
        group_id=row["group_id"],
        task_name=row["task_name"],
        event_kind=EventKind(row["event_kind"]),
        payload=json.loads(row["payload_json"]),
        timestamp=row["timestamp"],
    )
