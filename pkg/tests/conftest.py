"""Shared fixtures: an in-memory stack wired like production, plus
remote-tree seeding helpers and a random event-stream generator."""

from __future__ import annotations

import random
import uuid as uuid_mod
from pathlib import Path

import pytest

from fairflow.analyzer import AnalyzerEngine, ParamField, WorkflowDefinition, WorkflowRegistry
from fairflow.db import Database, utc_now
from fairflow.forms import FormsRegistry
from fairflow.importer import ImporterDaemon, ImporterService
from fairflow.provenance import EventKind, ProvenanceStore, WorkflowEvent
from fairflow.repo import ImageRepository
from fairflow.runner import ContainerRunner, MockBackend
from fairflow.scheduler import BatchSimulator


class Stack:
    """Every service wired over one in-memory database and a tmp file tree."""

    def __init__(self, root: Path):
        self.root = root
        self.db = Database(":memory:")
        self.store = ProvenanceStore(self.db)
        self.managed_root = root / "managed"
        self.remote_root = root / "remote"
        self.remote_root.mkdir(parents=True, exist_ok=True)
        self.repo = ImageRepository(self.db, self.managed_root)
        self.backend = MockBackend()
        self.runner = ContainerRunner(self.backend)
        self.workdir = root / "work"
        self.importer = ImporterService(
            self.store,
            self.repo,
            self.runner,
            self.remote_root,
            self.workdir,
            display_names={"rreits": "Ron Reits"},
        )
        self.scheduler = BatchSimulator()
        self.registry = WorkflowRegistry(root / "slurm-config.ini")
        self.engine = AnalyzerEngine(
            self.registry, self.store, self.repo, self.scheduler, root / "analyzer-work"
        )
        self.forms = FormsRegistry(self.db, self.repo)

    def daemon(self, workers: int = 4, poll_interval_ms: int = 5) -> ImporterDaemon:
        return ImporterDaemon(
            self.importer, self.store, workers=workers, poll_interval_ms=poll_interval_ms
        )

    def seed_mappings(self) -> None:
        self.store.add_mapping("Reits", "coreReits")
        self.store.add_mapping("Krawczyk", "coreKrawczyk")

    def add_remote_file(self, rel: str, content: bytes = b"pixels\n") -> Path:
        path = self.remote_root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(content)
        return path

    def dataset(self, name: str = "Dataset 1", group: str = "Reits", owner: str = "rreits"):
        return self.repo.create_object("Dataset", name, owner, group)

    def screen(self, name: str = "experiment", group: str = "Reits", owner: str = "rreits"):
        return self.repo.create_object("Screen", name, owner, group)


@pytest.fixture
def stack(tmp_path: Path) -> Stack:
    return Stack(tmp_path)


def cellpose_definition(nuc_channel_default=None) -> WorkflowDefinition:
    return WorkflowDefinition.build(
        name="cellpose",
        github_repo="https://github.com/TorecLuik/W_NucleiSegmentation-Cellpose/tree/v1.3.1",
        container_image="torecluik/t_nucleisegmentation-cellpose:v1.3.1",
        description="Nuclei segmentation with Cellpose",
        sbatch_params={"partition": "gpu", "time": "00:15:00"},
        param_schema=[
            ParamField("nuc_channel", "int", nuc_channel_default),
            ParamField("use_gpu", "bool", False),
            ParamField("cp_model", "enum", "nuclei", options=("nuclei", "cyto")),
            ParamField("diameter", "int", 0),
            ParamField("prob_threshold", "float", 0.5),
            ParamField("use_zarr", "bool", False),
        ],
    )


CELLPOSE_PARAMS = {
    "nuc_channel": 3,
    "use_gpu": False,
    "cp_model": "nuclei",
    "diameter": 0,
    "prob_threshold": 0.5,
}


_STATUSES = ("JOB_PENDING", "JOB_RUNNING", "JOB_COMPLETED", "JOB_FAILED", "DONE")
_PROGRESS = ("0", "10.0", "50.0", "70.0", "90.0", "100", "93.3", "not-a-number")
_TASKS = ("cellpose", "stardist", "SLURM_Get_Results.py", "CONVERT_ZARR_TO_TIFF")


def random_event_stream(rng: random.Random, max_events: int = 50) -> list[WorkflowEvent]:
    """Arbitrary but well-formed event sequences for fold determinism tests."""
    run_uuids = [
        str(uuid_mod.UUID(int=rng.getrandbits(128))) for _ in range(rng.randint(1, 4))
    ]
    kinds = list(EventKind)
    events = []
    for seq in range(1, rng.randint(1, max_events) + 1):
        kind = rng.choice(kinds)
        payload: dict[str, str] = {}
        if kind is EventKind.RUN_CREATED:
            if rng.random() < 0.7:
                payload["name"] = rng.choice(("Slurm Workflow", "Batch Run"))
            if rng.random() < 0.7:
                payload["main_task_name"] = rng.choice(_TASKS)
        elif kind is EventKind.STATUS_UPDATE:
            payload["status"] = rng.choice(_STATUSES)
            if rng.random() < 0.8:
                payload["progress"] = rng.choice(_PROGRESS)
        elif kind is EventKind.PROGRESS_UPDATE:
            payload["progress"] = rng.choice(_PROGRESS)
        elif kind is EventKind.JOB_SUBMITTED:
            payload["job_id"] = str(rng.randint(1, 99))
        elif kind is EventKind.RESULT_ATTACHED:
            payload["image_id"] = str(rng.randint(1, 99))
        events.append(
            WorkflowEvent(
                sequence=seq,
                run_uuid=rng.choice(run_uuids),
                user_id=rng.randint(1, 5),
                group_id=rng.randint(1, 3),
                task_name=rng.choice(_TASKS),
                event_kind=kind,
                payload=payload,
                timestamp=utc_now(),
            )
        )
    return events
