"""Composition root: builds every service from one Config.

The HTTP layer and the CLI both construct an AppContext and call the same
module methods underneath, which is what keeps their persisted records
identical for identical logical requests.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass

from .analyzer import AnalyzerEngine, WorkflowRegistry
from .config import Config
from .db import Database
from .errors import FairflowError
from .forms import FormsRegistry
from .importer import ImporterDaemon, ImporterService
from .provenance import ProvenanceStore
from .repo import ImageRepository
from .runner import ContainerRunner, build_backend
from .scheduler import BatchSimulator

log = logging.getLogger("fairflow.app")


@dataclass(frozen=True)
class Session:
    token: str
    username: str
    group: str
    is_admin: bool = False
    display_name: str = ""


class AppContext:
    def __init__(self, config: Config):
        self.config = config
        db_value = str(config.get("db.path"))
        self.db = Database(":memory:" if db_value == ":memory:" else config.path("db.path"))
        self.store = ProvenanceStore(self.db)
        self.managed_root = config.path("repo.managed_root")
        self.remote_root = config.path("repo.remote_root")
        self.repo = ImageRepository(self.db, self.managed_root)
        backend = build_backend(
            str(config.get("runner.backend")),
            str(config.get("runner.shell_template", "")),
            int(config.get("runner.timeout_s", 1800)),
        )
        self.runner = ContainerRunner(backend)
        self.sessions: dict[str, Session] = {}
        for entry in config.get("api.tokens") or []:
            session = Session(
                token=str(entry["token"]),
                username=str(entry["username"]),
                group=str(entry["group"]),
                is_admin=bool(entry.get("admin", False)),
                display_name=str(entry.get("display_name", entry["username"])),
            )
            self.sessions[session.token] = session
        display_names = {s.username: s.display_name for s in self.sessions.values()}
        self.importer = ImporterService(
            self.store,
            self.repo,
            self.runner,
            self.remote_root,
            config.path("importer.workdir"),
            display_names=display_names,
        )
        self.daemon = ImporterDaemon(
            self.importer,
            self.store,
            workers=int(config.get("importer.workers")),
            poll_interval_ms=int(config.get("importer.poll_interval_ms")),
        )
        self.scheduler = BatchSimulator(
            queue_ticks=int(config.get("sim.queue_ticks")),
            run_ticks=int(config.get("sim.run_ticks")),
            realtime=bool(config.get("sim.realtime")),
        )
        self.registry = WorkflowRegistry(config.path("analyzer.config_path"))
        self.engine = AnalyzerEngine(
            self.registry,
            self.store,
            self.repo,
            self.scheduler,
            config.path("analyzer.workdir"),
            convert_extensions=tuple(config.get("analyzer.convert_extensions")),
        )
        self.forms = FormsRegistry(self.db, self.repo)
        self._ticker_stop = threading.Event()
        self._ticker: threading.Thread | None = None

    @classmethod
    def from_config_file(cls, path: str | None = None) -> "AppContext":
        return cls(Config.load(path))

    def init_dirs(self) -> list[str]:
        """Create every directory the stack needs; safe to repeat."""
        created = []
        for p in (
            self.managed_root,
            self.remote_root,
            self.config.path("importer.workdir"),
            self.config.path("analyzer.workdir"),
        ):
            if not p.exists():
                p.mkdir(parents=True, exist_ok=True)
                created.append(str(p))
        self.registry.save()
        return created

    def check(self) -> dict[str, bool]:
        """Readiness per subsystem, in report order."""
        results: dict[str, bool] = {}
        try:
            self.db.query_one("SELECT 1")
            results["db"] = True
        except Exception:
            results["db"] = False
        results["remote"] = self.remote_root.is_dir() and os.access(
            self.remote_root, os.R_OK | os.W_OK
        )
        try:
            probe_dir = self.config.path("importer.workdir") / "check-probe"
            results["runner"] = self.runner.probe(probe_dir)
        except Exception:
            results["runner"] = False
        results["scheduler"] = self.scheduler.probe()
        return results

    def start_background(self) -> None:
        self.daemon.start()
        if self._ticker is None:
            self._ticker_stop.clear()
            interval = int(self.config.get("analyzer.poll_interval_ms")) / 1000.0
            self._ticker = threading.Thread(
                target=self._tick_loop, args=(interval,), name="analyzer-ticker", daemon=True
            )
            self._ticker.start()

    def _tick_loop(self, interval: float) -> None:
        while not self._ticker_stop.is_set():
            try:
                self.engine.advance_all()
            except Exception:
                log.exception("analyzer tick failed")
            self._ticker_stop.wait(interval)

    def stop_background(self) -> None:
        self.daemon.stop()
        if self._ticker is not None:
            self._ticker_stop.set()
            self._ticker.join(timeout=10)
            self._ticker = None

    def session_for_token(self, token: str) -> Session:
        session = self.sessions.get(token)
        if session is None:
            raise FairflowError("UNAUTHENTICATED", "unknown or missing token")
        return session

    def close(self) -> None:
        self.stop_background()
        self.db.close()
