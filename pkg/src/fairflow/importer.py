"""Order-driven import pipeline and the worker pool that drives it.

Each claimed order runs through six steps: build the data package, run
optional preprocessing, link the files into the managed repository in
place, retarget links at converted output, attach the metadata blocks,
and mark the order done. A failure at any step marks the order FAILED
with a message naming the step; it never takes the daemon down. The
per-order scratch directory is removed whichever way the order ends.
"""

from __future__ import annotations

import csv
import logging
import os
import shutil
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .db import utc_now
from .errors import FairflowError
from .provenance import ImportOrder, OrderStatus, ProvenanceStore
from .repo import ImageRepository, ObjectKind, TransferMode
from .runner import ContainerRunner, PreprocessingSpec, validate_spec

log = logging.getLogger("fairflow.importer")

STEPS = ("package", "preprocess", "import", "retarget", "metadata", "finalize")

IMPORT_NAMESPACE = "omeroadi.import"
PREPROCESSING_NAMESPACE = "omeroadi.preprocessing"
CSV_NAMESPACE = "omeroadi.csv"
DETAILS_NAMESPACE = "import.details"

DEFAULT_WORKERS = 4
DEFAULT_POLL_INTERVAL_MS = 2000


def display_stage(status: OrderStatus | str) -> str:
    """Human-facing stage label shown by monitors, e.g. 'Import Completed'."""
    return "Import " + OrderStatus(status).value.title()


@dataclass
class DataPackage:
    """Everything one order's pipeline accumulates between steps."""

    order: ImportOrder
    target_files: list[Path]
    spec: PreprocessingSpec | None = None
    converted_local: Path | None = None
    converted_remote: Path | None = None
    harvested_metadata: dict[str, str] = field(default_factory=dict)
    fileset_id: int | None = None
    image_ids: list[int] = field(default_factory=list)
    retargeted: list[str] = field(default_factory=list)


class _StepFailure(Exception):
    def __init__(self, step: str, cause: BaseException):
        code = cause.code if isinstance(cause, FairflowError) else str(cause) or type(cause).__name__
        super().__init__(f"{step}: {code}")
        self.step = step
        self.cause = cause


def read_sidecar_rows(image_path: Path) -> list[tuple[str, str]]:
    """Key-value rows from a same-stem .csv next to the file, if present.

    An optional leading "Key,Value" header row is skipped; short rows are
    ignored rather than rejected, since sidecars are hand-written.
    """
    sidecar = image_path.with_suffix(".csv")
    if not sidecar.is_file():
        return []
    with open(sidecar, "r", encoding="utf-8", newline="") as fh:
        rows = [(r[0], r[1]) for r in csv.reader(fh) if len(r) >= 2]
    if rows and rows[0] == ("Key", "Value"):
        rows = rows[1:]
    return rows


class ImporterService:
    """Processes one claimed order end to end.

    ``step_interceptor(step_name, order)`` runs before each step body and may
    raise to simulate a fault at that exact point; operational hosts leave it
    unset.
    """

    def __init__(
        self,
        store: ProvenanceStore,
        repo: ImageRepository,
        runner: ContainerRunner,
        remote_root: str | Path,
        workdir_base: str | Path,
        display_names: dict[str, str] | None = None,
        step_interceptor=None,
    ):
        self.store = store
        self.repo = repo
        self.runner = runner
        self.remote_root = Path(remote_root)
        self.workdir_base = Path(workdir_base)
        self.display_names = display_names or {}
        self.step_interceptor = step_interceptor

    def process_order(self, order: ImportOrder) -> ImportOrder:
        """Run the pipeline; returns the order in a terminal state."""
        if order.status is OrderStatus.PENDING:
            order = self.store.update_order_status(order.uuid, OrderStatus.STARTED)
        workdir = self.workdir_base / order.uuid
        package: DataPackage | None = None
        try:
            package = self._step(order, "package", lambda: self._build_package(order, workdir))
            if package.spec is not None:
                order = self.store.update_order_status(order.uuid, OrderStatus.PREPROCESSING)
                self._step(order, "preprocess", lambda: self._preprocess(package, workdir))
            self._step(order, "import", lambda: self._import(package))
            self._step(order, "retarget", lambda: self._retarget(package))
            self._step(order, "metadata", lambda: self._attach_metadata(package))
            order = self._step(
                order,
                "finalize",
                lambda: self.store.update_order_status(order.uuid, OrderStatus.COMPLETED),
            )
        except _StepFailure as failure:
            order = self.store.update_order_status(
                order.uuid, OrderStatus.FAILED, str(failure)
            )
        finally:
            shutil.rmtree(workdir, ignore_errors=True)
        return order

    def _step(self, order: ImportOrder, name: str, body):
        t0 = time.perf_counter()
        try:
            if self.step_interceptor is not None:
                self.step_interceptor(name, order)
            result = body()
        except Exception as exc:
            ms = int((time.perf_counter() - t0) * 1000)
            log.info("order=%s step=%s outcome=fail ms=%d", order.uuid, name, ms)
            raise _StepFailure(name, exc)
        ms = int((time.perf_counter() - t0) * 1000)
        log.info("order=%s step=%s outcome=ok ms=%d", order.uuid, name, ms)
        return result

    # -- steps -------------------------------------------------------------

    def _build_package(self, order: ImportOrder, workdir: Path) -> DataPackage:
        workdir.mkdir(parents=True, exist_ok=True)
        targets = [self.remote_root / f for f in order.files]
        spec = PreprocessingSpec.from_dict(order.preprocessing) if order.preprocessing else None
        return DataPackage(order=order, target_files=targets, spec=spec)

    def _preprocess(self, package: DataPackage, workdir: Path) -> None:
        spec = package.spec
        violations = validate_spec(spec)
        if violations:
            raise FairflowError(violations[0], "preprocessing spec rejected")
        source = package.target_files[0]
        remote_out = source.parent / spec.output_subfolder_name
        result = self.runner.run(spec, source, workdir / "preprocess", remote_out)
        package.harvested_metadata = dict(result.metadata)
        if result.converted_file is not None and spec.alters_target:
            package.converted_local = result.converted_file
            package.converted_remote = result.remote_copy

    def _import(self, package: DataPackage) -> None:
        order = package.order
        if package.converted_local is not None:
            import_targets = [package.converted_local]
            image_names = [package.converted_local.name]
        else:
            import_targets = list(package.target_files)
            image_names = list(order.file_names)
        for t in import_targets:
            if not t.exists():
                raise FairflowError("TARGET_MISSING", f"target vanished: {t}")
        destination_id = order.destination_id
        if order.destination_type == "Screen":
            screen = self.repo.get_object(destination_id)
            plate = self.repo.create_object(
                ObjectKind.PLATE,
                Path(order.file_names[0]).stem,
                order.username,
                order.group,
                parent_id=screen.id,
            )
            destination_id = plate.id
        fileset = self.repo.register_fileset(
            image_names,
            destination_id,
            import_targets,
            TransferMode.IN_PLACE,
            owner=order.username,
            group=order.group,
        )
        package.fileset_id = fileset.id
        package.image_ids = list(fileset.image_ids)

    def _retarget(self, package: DataPackage) -> None:
        if package.converted_local is None:
            return
        if package.converted_remote is None or not package.converted_remote.exists():
            raise FairflowError(
                "NEW_TARGET_MISSING", "no remote copy of the converted file"
            )
        fileset = self.repo.get_fileset(package.fileset_id)
        local_abs = os.path.abspath(package.converted_local)
        for entry in fileset.entries:
            if entry.target_path == local_abs:
                self.repo.retarget_fileset_entry(
                    fileset.id, entry.link_path, package.converted_remote
                )
                package.retargeted.append(entry.link_path)
        package.converted_local.unlink()

    def _attach_metadata(self, package: DataPackage) -> None:
        order = package.order
        now = utc_now()
        added_by = self.display_names.get(order.username, order.username)
        abs_files = [str(t) for t in package.target_files]
        import_pairs = [
            ("Added by", added_by),
            ("UUID", order.uuid),
            ("Filepath", abs_files[0]),
            ("Group", order.group),
            ("Username", order.username),
            ("DestinationID", str(order.destination_id)),
            ("DestinationType", order.destination_type),
            ("Files", "[" + ", ".join(abs_files) + "]"),
            ("FileNames", "[" + ", ".join(order.file_names) + "]"),
            ("Import_Timestamp", now),
        ]
        csv_rows: list[tuple[str, str]] = []
        seen_keys: set[str] = set()
        for t in package.target_files:
            for key, value in read_sidecar_rows(t):
                if key not in seen_keys:
                    seen_keys.add(key)
                    csv_rows.append((key, value))
        for image_id in package.image_ids:
            self.repo.annotate(image_id, IMPORT_NAMESPACE, import_pairs)
            self.repo.annotate(
                image_id, DETAILS_NAMESPACE, [("transfer", "ln_s")]
            )
            if package.spec is not None:
                pre_pairs = [("container_ref", package.spec.container_ref)]
                pre_pairs += list(package.harvested_metadata.items())
                self.repo.annotate(image_id, PREPROCESSING_NAMESPACE, pre_pairs)
            if csv_rows:
                self.repo.annotate(image_id, CSV_NAMESPACE, csv_rows)


class ImporterDaemon:
    """Pool of worker threads claiming and processing orders until stopped."""

    def __init__(
        self,
        service: ImporterService,
        store: ProvenanceStore,
        workers: int = DEFAULT_WORKERS,
        poll_interval_ms: int = DEFAULT_POLL_INTERVAL_MS,
    ):
        if workers < 1:
            raise FairflowError("FATAL_CONFIG", "importer needs at least one worker")
        self.service = service
        self.store = store
        self.workers = workers
        self.poll_interval_s = poll_interval_ms / 1000.0
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self) -> None:
        if self._threads:
            return
        root = self.service.remote_root
        if not root.is_dir() or not os.access(root, os.R_OK | os.W_OK):
            raise FairflowError("FATAL_CONFIG", f"remote root not usable: {root}")
        self.service.workdir_base.mkdir(parents=True, exist_ok=True)
        self._stop.clear()
        for n in range(self.workers):
            t = threading.Thread(target=self._loop, name=f"importer-{n}", daemon=True)
            t.start()
            self._threads.append(t)
        log.info("importer daemon started workers=%d", self.workers)

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                order = self.store.claim_next_pending()
            except Exception:
                log.exception("claim failed; backing off")
                self._stop.wait(self.poll_interval_s)
                continue
            if order is None:
                self._stop.wait(self.poll_interval_s)
                continue
            try:
                self.service.process_order(order)
            except Exception as exc:
                # The service absorbs step failures itself; anything reaching
                # here is unexpected, so fail the order and keep the worker.
                log.exception("order %s crashed the pipeline", order.uuid)
                try:
                    self.store.update_order_status(
                        order.uuid, OrderStatus.FAILED, f"internal: {exc}"
                    )
                except FairflowError:
                    pass

    def stop(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=10)
        self._threads.clear()

    def drain(self, timeout_s: float = 30.0) -> bool:
        """Wait until no order is PENDING, STARTED, or PREPROCESSING."""
        deadline = time.monotonic() + timeout_s
        live = (OrderStatus.PENDING, OrderStatus.STARTED, OrderStatus.PREPROCESSING)
        while time.monotonic() < deadline:
            if not any(self.store.list_orders(status=s) for s in live):
                return True
            time.sleep(0.01)
        return False
