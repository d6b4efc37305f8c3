"""Workflow registry and run orchestration on top of the batch scheduler.

A registered workflow pins a released GitHub tag and a tagged container
image. Starting a run turns the request into an ordered plan — optional
format conversion, the main task, then result retrieval — submits phases
one at a time, and records every externally visible step as an event.
Progress maps phases onto fixed bands (conversion 0-30, main 30-90,
retrieval 90-100) so a finished main phase always reads 90.0. Retrieved
mask files are imported in COPY mode and stamped with the full recipe:
run id, version, container image, sbatch command, and every parameter.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import re
import threading
import uuid as uuid_mod
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import FairflowError
from .provenance import EventKind, ProvenanceStore, RunProjection
from .repo import ImageRepository, ObjectKind, TransferMode
from .scheduler import BatchSimulator, JobSpec, JobState

log = logging.getLogger("fairflow.analyzer")

REPO_URL_RE = re.compile(r"^https://github\.com/[^/]+/[^/]+/(tree|releases/tag)/[^/]+$")

PARAM_TYPES = ("int", "float", "bool", "enum", "string")

WORKFLOW_NAMESPACE = "biomero.workflow"
ATTACHMENTS_NAMESPACE = "biomero.workflow.attachments"
RUN_DISPLAY_NAME = "Slurm Workflow"

CONVERT_TASK = "CONVERT_ZARR_TO_TIFF"
CONVERT_SCRIPT = "SLURM_Remote_Conversion.py"
RETRIEVE_TASK = "SLURM_Get_Results.py"
RETRIEVE_SCRIPT = "SLURM_Get_Results.py"

# Progress bands per phase kind: (low, high) percent.
PROGRESS_BANDS = {"CONVERT": (0.0, 30.0), "MAIN": (30.0, 90.0), "RETRIEVE": (90.0, 100.0)}

DEFAULT_CONVERT_EXTENSIONS = (".zarr",)


@dataclass(frozen=True)
class ParamField:
    name: str
    type: str
    default: object = None
    description: str = ""
    options: tuple = ()

    def to_dict(self) -> dict:
        d = {"name": self.name, "type": self.type, "default": self.default,
             "description": self.description}
        if self.options:
            d["options"] = list(self.options)
        return d

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ParamField":
        return cls(
            name=raw["name"],
            type=raw["type"],
            default=raw.get("default"),
            description=raw.get("description", ""),
            options=tuple(raw.get("options", ())),
        )


@dataclass(frozen=True)
class WorkflowDefinition:
    name: str
    description: str
    github_repo: str
    container_image: str
    job_script: str
    sbatch_params: tuple[tuple[str, str], ...] = ()
    param_schema: tuple[ParamField, ...] = ()

    @classmethod
    def build(
        cls,
        name: str,
        github_repo: str,
        container_image: str,
        description: str = "",
        job_script: str = "",
        sbatch_params: Mapping[str, str] | None = None,
        param_schema: tuple[ParamField, ...] | list[ParamField] = (),
    ) -> "WorkflowDefinition":
        return cls(
            name=name,
            description=description,
            github_repo=github_repo,
            container_image=container_image,
            job_script=job_script or f"jobs/{name}.sh",
            sbatch_params=tuple((str(k), str(v)) for k, v in (sbatch_params or {}).items()),
            param_schema=tuple(param_schema),
        )

    @property
    def version(self) -> str:
        """The release tag the repository URL pins."""
        return self.github_repo.rstrip("/").rsplit("/", 1)[-1]


def validate_definition(defn: WorkflowDefinition) -> None:
    if not defn.name:
        raise FairflowError("INVALID_REPO_URL", "workflow name must be non-empty")
    if not REPO_URL_RE.match(defn.github_repo):
        raise FairflowError(
            "INVALID_REPO_URL",
            f"{defn.github_repo!r} is not a GitHub URL pinned to a released version",
        )
    image_tail = defn.container_image.rsplit("/", 1)[-1]
    if ":" not in image_tail or not image_tail.rsplit(":", 1)[1]:
        raise FairflowError(
            "UNTAGGED_IMAGE", f"container image {defn.container_image!r} has no version tag"
        )
    for f in defn.param_schema:
        if f.type not in PARAM_TYPES:
            raise FairflowError(
                "VALIDATION_FAILED", f"param {f.name!r} has unsupported type {f.type!r}"
            )
        if f.type == "enum" and not f.options:
            raise FairflowError(
                "VALIDATION_FAILED", f"enum param {f.name!r} needs options"
            )


class WorkflowRegistry:
    """Named workflow definitions persisted to an INI config file.

    The file holds one [MODELS] section with per-workflow keys:
    ``<name>_repo``, ``<name>_image``, ``<name>_job``, one
    ``<name>_job_<key>`` per sbatch parameter, plus ``<name>_description``
    and ``<name>_params`` (JSON) so definitions round-trip exactly.
    """

    def __init__(self, config_path: str | Path | None = None):
        self.config_path = Path(config_path) if config_path else None
        self._defs: dict[str, WorkflowDefinition] = {}
        if self.config_path and self.config_path.exists():
            self.load()

    def register(self, defn: WorkflowDefinition) -> None:
        validate_definition(defn)
        if defn.name in self._defs:
            raise FairflowError("DUPLICATE_NAME", f"workflow {defn.name!r} already registered")
        self._defs[defn.name] = defn
        self.save()
        log.info("workflow %s registered (%s)", defn.name, defn.version)

    def update(self, name: str, defn: WorkflowDefinition) -> None:
        if name not in self._defs:
            raise FairflowError("UNKNOWN_WORKFLOW", f"no workflow {name!r}")
        validate_definition(defn)
        if defn.name != name:
            del self._defs[name]
        self._defs[defn.name] = defn
        self.save()

    def remove(self, name: str) -> None:
        if name not in self._defs:
            raise FairflowError("UNKNOWN_WORKFLOW", f"no workflow {name!r}")
        del self._defs[name]
        self.save()

    def get(self, name: str) -> WorkflowDefinition:
        if name not in self._defs:
            raise FairflowError("UNKNOWN_WORKFLOW", f"no workflow {name!r}")
        return self._defs[name]

    def list(self, filter_text: str | None = None) -> list[WorkflowDefinition]:
        defs = list(self._defs.values())
        if filter_text:
            needle = filter_text.lower()
            defs = [
                d for d in defs
                if needle in d.name.lower() or needle in d.description.lower()
            ]
        return defs

    def replace_all(self, defs: list[WorkflowDefinition]) -> None:
        seen: set[str] = set()
        for d in defs:
            validate_definition(d)
            if d.name in seen:
                raise FairflowError("DUPLICATE_NAME", f"workflow {d.name!r} listed twice")
            seen.add(d.name)
        self._defs = {d.name: d for d in defs}
        self.save()

    def render_param_form(self, name: str) -> list[dict]:
        """Ordered field descriptors with defaults, ready for a UI to render."""
        return [f.to_dict() for f in self.get(name).param_schema]

    # -- persistence ---------------------------------------------------------

    def save(self) -> None:
        if self.config_path is None:
            return
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.add_section("MODELS")
        for d in self._defs.values():
            parser.set("MODELS", f"{d.name}_repo", d.github_repo)
            parser.set("MODELS", f"{d.name}_image", d.container_image)
            parser.set("MODELS", f"{d.name}_job", d.job_script)
            for k, v in d.sbatch_params:
                parser.set("MODELS", f"{d.name}_job_{k}", v)
            if d.description:
                parser.set("MODELS", f"{d.name}_description", d.description)
            parser.set(
                "MODELS",
                f"{d.name}_params",
                json.dumps([f.to_dict() for f in d.param_schema]),
            )
        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.config_path, "w", encoding="utf-8") as fh:
            parser.write(fh)

    def load(self) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read(self.config_path, encoding="utf-8")
        self._defs = {}
        if not parser.has_section("MODELS"):
            return
        items = list(parser.items("MODELS"))
        names = [k[: -len("_repo")] for k, _ in items if k.endswith("_repo")]
        lookup = dict(items)
        for name in names:
            sbatch = []
            for k, v in items:
                prefix = f"{name}_job_"
                if k.startswith(prefix):
                    sbatch.append((k[len(prefix):], v))
            params_raw = lookup.get(f"{name}_params", "[]")
            schema = tuple(ParamField.from_dict(p) for p in json.loads(params_raw))
            self._defs[name] = WorkflowDefinition(
                name=name,
                description=lookup.get(f"{name}_description", ""),
                github_repo=lookup[f"{name}_repo"],
                container_image=lookup.get(f"{name}_image", ""),
                job_script=lookup.get(f"{name}_job", f"jobs/{name}.sh"),
                sbatch_params=tuple(sbatch),
                param_schema=schema,
            )

    def ini_text(self) -> str:
        if self.config_path and self.config_path.exists():
            return self.config_path.read_text(encoding="utf-8")
        return ""


@dataclass(frozen=True)
class InputSelection:
    container_id: int
    image_ids: tuple[int, ...]


@dataclass(frozen=True)
class OutputOptions:
    target_dataset_id: int
    attach_zip: bool = False
    attach_tables: bool = False
    email_on_done: bool = False
    rename_pattern: str | None = None


@dataclass(frozen=True)
class RunRequest:
    workflow_name: str
    input_selection: InputSelection
    output_options: OutputOptions
    params: dict = field(default_factory=dict)
    version: str = ""


@dataclass
class _Phase:
    kind: str
    task_name: str
    job_spec: JobSpec


class _RunState:
    def __init__(self):
        self.run_uuid = ""
        self.workflow: WorkflowDefinition | None = None
        self.version = ""
        self.request: RunRequest | None = None
        self.user_id = 0
        self.group_id = 0
        self.username = ""
        self.groupname = ""
        self.phases: list[_Phase] = []
        self.phase_idx = 0
        self.job_id: int | None = None
        self.last_status = ""
        self.last_progress: float | None = None
        self.main_command = ""
        self.param_pairs: list[tuple[str, str]] = []
        self.input_by_stem: dict[str, int] = {}
        self.retrieve_outputs: tuple[str, ...] = ()
        self.output_image_ids: list[int] = []
        self.finished = False
        self.finalized = False
        self.lock = threading.Lock()


def _stringify(value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    return str(value)


def _check_param(ftype: str, value, options: tuple) -> bool:
    if ftype == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if ftype == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if ftype == "bool":
        return isinstance(value, bool)
    if ftype == "enum":
        return value in options
    if ftype == "string":
        return isinstance(value, str)
    return False


class AnalyzerEngine:
    def __init__(
        self,
        registry: WorkflowRegistry,
        store: ProvenanceStore,
        repo: ImageRepository,
        scheduler: BatchSimulator,
        workdir: str | Path,
        convert_extensions: tuple[str, ...] = DEFAULT_CONVERT_EXTENSIONS,
    ):
        self.registry = registry
        self.store = store
        self.repo = repo
        self.scheduler = scheduler
        self.workdir = Path(workdir)
        self.convert_extensions = tuple(e.lower() for e in convert_extensions)
        self._runs: dict[str, _RunState] = {}
        self._lock = threading.Lock()

    # -- run lifecycle ------------------------------------------------------

    def start_run(self, request: RunRequest, username: str, groupname: str) -> str:
        """Validate, record RUN_CREATED, submit the first phase, and return."""
        wf = self.registry.get(request.workflow_name)
        params = self._effective_params(wf, request.params)

        sel = request.input_selection
        if not sel.image_ids:
            raise FairflowError("VALIDATION_FAILED", "image selection is empty")
        container = self.repo.get_object(sel.container_id)
        images = []
        for image_id in sel.image_ids:
            img = self.repo.get_object(image_id)
            if img.kind is not ObjectKind.IMAGE:
                raise FairflowError("VALIDATION_FAILED", f"object {image_id} is not an Image")
            if img.parent_id != container.id and not self.repo.is_descendant(
                image_id, container.id
            ):
                raise FairflowError(
                    "VALIDATION_FAILED", f"image {image_id} is not inside {container.id}"
                )
            images.append(img)
        try:
            target = self.repo.get_object(request.output_options.target_dataset_id)
        except FairflowError:
            raise FairflowError(
                "TARGET_DATASET_MISSING",
                f"no dataset {request.output_options.target_dataset_id}",
            )
        if target.kind is not ObjectKind.DATASET:
            raise FairflowError(
                "TARGET_DATASET_MISSING", f"object {target.id} is not a Dataset"
            )

        state = _RunState()
        state.run_uuid = str(uuid_mod.uuid4())
        state.workflow = wf
        state.version = request.version or wf.version
        state.request = request
        state.username = username
        state.groupname = groupname
        state.user_id = self.repo.ensure_user(username)
        state.group_id = self.repo.ensure_group(groupname)
        state.param_pairs = [(f.name, _stringify(params[f.name])) for f in wf.param_schema]
        state.input_by_stem = {Path(img.name).stem: img.id for img in images}

        descriptors = tuple(f"{state.run_uuid}/{img.id}/{img.name}" for img in images)
        run_dir = self.workdir / state.run_uuid
        needs_convert = any(
            Path(img.name).suffix.lower() in self.convert_extensions for img in images
        )
        sbatch = list(wf.sbatch_params)
        if request.output_options.email_on_done:
            sbatch.append(("mail-user", username))
        phases: list[_Phase] = []
        if needs_convert:
            phases.append(_Phase("CONVERT", CONVERT_TASK, JobSpec.build(
                CONVERT_SCRIPT, {}, descriptors, run_dir / "convert")))
        phases.append(_Phase("MAIN", wf.name, JobSpec.build(
            wf.job_script, dict(sbatch), descriptors, run_dir / "main")))
        phases.append(_Phase("RETRIEVE", RETRIEVE_TASK, JobSpec.build(
            RETRIEVE_SCRIPT, {}, descriptors, run_dir / "retrieve")))
        state.phases = phases

        with self._lock:
            self._runs[state.run_uuid] = state

        payload = {
            "name": RUN_DISPLAY_NAME,
            "workflow": wf.name,
            "version": state.version,
            "main_task_name": wf.name,
            "container_image": wf.container_image,
            "target_dataset": str(target.id),
        }
        for pname, pvalue in state.param_pairs:
            payload[f"Param_{pname}"] = pvalue
        self._emit(state, wf.name, EventKind.RUN_CREATED, payload)
        self._start_phase(state, 0)
        log.info("run %s started workflow=%s images=%d", state.run_uuid, wf.name, len(images))
        return state.run_uuid

    def _effective_params(self, wf: WorkflowDefinition, given: Mapping) -> dict:
        known = {f.name for f in wf.param_schema}
        unknown = set(given) - known
        if unknown:
            raise FairflowError(
                "VALIDATION_FAILED", "unknown params: " + ", ".join(sorted(unknown))
            )
        params = {}
        for f in wf.param_schema:
            if f.name in given:
                value = given[f.name]
            elif f.default is not None:
                value = f.default
            else:
                raise FairflowError("VALIDATION_FAILED", f"param {f.name!r} is required")
            if not _check_param(f.type, value, f.options):
                raise FairflowError(
                    "VALIDATION_FAILED", f"param {f.name!r} rejects value {value!r}"
                )
            params[f.name] = value
        return params

    def _emit(self, state: _RunState, task_name: str, kind: EventKind, payload: dict) -> None:
        self.store.append_event(
            state.run_uuid, state.user_id, state.group_id, task_name, kind, payload
        )

    def _start_phase(self, state: _RunState, idx: int) -> None:
        phase = state.phases[idx]
        state.phase_idx = idx
        self._emit(state, phase.task_name, EventKind.TASK_STARTED, {"kind": phase.kind})
        state.job_id = self.scheduler.submit(phase.job_spec)
        record = self.scheduler.get(state.job_id)
        if phase.kind == "MAIN":
            state.main_command = record.sbatch_command
        self._emit(state, phase.task_name, EventKind.JOB_SUBMITTED, {
            "job_id": str(state.job_id),
            "sbatch_command": record.sbatch_command,
        })

    def advance_run(self, run_uuid: str) -> RunProjection:
        """Poll the active phase once and mirror whatever changed as events."""
        state = self._runs.get(run_uuid)
        if state is None:
            raise FairflowError("UNKNOWN_RUN", f"no live run {run_uuid!r}")
        with state.lock:
            if not state.finished:
                self._advance_locked(state)
        return self.store.project_run(run_uuid)

    def _advance_locked(self, state: _RunState) -> None:
        phase = state.phases[state.phase_idx]
        record = self.scheduler.poll(state.job_id)
        status = f"JOB_{record.state.value}"
        lo, hi = PROGRESS_BANDS[phase.kind]
        progress = round(lo + (hi - lo) * record.progress_fraction, 1)

        if status != state.last_status:
            self._emit(state, phase.task_name, EventKind.STATUS_UPDATE, {
                "status": status, "progress": str(progress),
            })
            state.last_status = status
            state.last_progress = progress
        elif state.last_progress is None or progress > state.last_progress:
            self._emit(state, phase.task_name, EventKind.PROGRESS_UPDATE, {
                "progress": str(progress),
            })
            state.last_progress = progress

        if record.state is JobState.COMPLETED:
            if state.phase_idx + 1 < len(state.phases):
                self._start_phase(state, state.phase_idx + 1)
            else:
                state.retrieve_outputs = record.outputs
                try:
                    self._finalize(state)
                except FairflowError as exc:
                    self._emit(state, phase.task_name, EventKind.TASK_FAILED, {
                        "failed_task": phase.task_name, "error": exc.code,
                    })
                    state.finished = True
                    return
                self._emit(state, state.workflow.name, EventKind.TASK_DONE, {
                    "images": str(len(state.output_image_ids)),
                })
                state.finished = True
        elif record.state in (JobState.FAILED, JobState.CANCELLED):
            self._emit(state, phase.task_name, EventKind.TASK_FAILED, {
                "failed_task": phase.task_name,
                "job_id": str(state.job_id),
            })
            state.finished = True

    def advance_all(self) -> None:
        with self._lock:
            live = [u for u, s in self._runs.items() if not s.finished]
        for run_uuid in live:
            try:
                self.advance_run(run_uuid)
            except FairflowError:
                log.exception("advance failed for run %s", run_uuid)

    def run_to_completion(self, run_uuid: str, max_polls: int = 200) -> RunProjection:
        """Drive one run until its projection is terminal; testing convenience."""
        for _ in range(max_polls):
            proj = self.advance_run(run_uuid)
            if proj.status in ("DONE", "FAILED"):
                return proj
        raise FairflowError("UNKNOWN_RUN", f"run {run_uuid} did not finish in {max_polls} polls")

    def live_runs(self) -> list[str]:
        with self._lock:
            return [u for u, s in self._runs.items() if not s.finished]

    def projection(self, run_uuid: str) -> RunProjection:
        return self.store.project_run(run_uuid)

    # -- outputs -----------------------------------------------------------------

    def finalize_outputs(self, run_uuid: str) -> list[int]:
        state = self._runs.get(run_uuid)
        if state is None:
            raise FairflowError("UNKNOWN_RUN", f"no live run {run_uuid!r}")
        with state.lock:
            if not state.finalized:
                raise FairflowError(
                    "VALIDATION_FAILED", "retrieval phase has not completed yet"
                )
            return list(state.output_image_ids)

    def _finalize(self, state: _RunState) -> None:
        opts = state.request.output_options
        try:
            target = self.repo.get_object(opts.target_dataset_id)
        except FairflowError:
            raise FairflowError(
                "TARGET_DATASET_MISSING", f"no dataset {opts.target_dataset_id}"
            )
        wf = state.workflow
        for out_path in state.retrieve_outputs:
            out = Path(out_path)
            name = self._rename(out.name, opts.rename_pattern)
            fileset = self.repo.register_fileset(
                [name], target.id, [out], TransferMode.COPY,
                owner=state.username, group=state.groupname,
            )
            image_id = fileset.image_ids[0]
            input_id = self._match_input(state, out.name)
            pairs = [
                ("Workflow_ID", state.run_uuid),
                ("Workflow_Name", wf.name),
                ("Version", state.version),
                ("Task_Name", wf.name),
                ("Container_Image", wf.container_image),
                ("Sbatch_Command", state.main_command),
                ("Input_Image_ID", str(input_id) if input_id is not None else ""),
            ]
            pairs.extend((f"Param_{n}", v) for n, v in state.param_pairs)
            self.repo.annotate(image_id, WORKFLOW_NAMESPACE, pairs)
            self._emit(state, wf.name, EventKind.RESULT_ATTACHED, {
                "image_id": str(image_id), "name": name,
            })
            state.output_image_ids.append(image_id)
        self._attach_extras(state, target.id)
        state.finalized = True

    def _attach_extras(self, state: _RunState, target_id: int) -> None:
        opts = state.request.output_options
        run_dir = self.workdir / state.run_uuid
        extras: list[tuple[str, str]] = []
        if opts.attach_zip:
            zip_path = run_dir / f"results_{state.run_uuid}.zip"
            run_dir.mkdir(parents=True, exist_ok=True)
            with zipfile.ZipFile(zip_path, "w") as zf:
                for out_path in state.retrieve_outputs:
                    zf.write(out_path, Path(out_path).name)
            extras.append(("zip", str(zip_path)))
        if opts.attach_tables:
            table_path = run_dir / f"measurements_{state.run_uuid}.csv"
            run_dir.mkdir(parents=True, exist_ok=True)
            with open(table_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["output", "bytes"])
                for out_path in state.retrieve_outputs:
                    writer.writerow([Path(out_path).name, Path(out_path).stat().st_size])
            extras.append(("table", str(table_path)))
        if extras:
            self.repo.annotate(target_id, ATTACHMENTS_NAMESPACE, extras)

    @staticmethod
    def _rename(name: str, pattern: str | None) -> str:
        if not pattern:
            return name
        if "{name}" in pattern:
            return pattern.replace("{name}", name)
        return pattern

    @staticmethod
    def _match_input(state: _RunState, output_name: str) -> int | None:
        stem = Path(output_name).stem
        if stem.endswith("_mask"):
            stem = stem[: -len("_mask")]
        return state.input_by_stem.get(stem)
