"""Containerized preprocessing: one container run per input file.

The contract with a container is fixed: it receives
``--inputfile /data/in/<name> --outputfolder /data/out`` plus one
``--<key> <value>`` pair per configured extra argument, and must leave a
``result.json`` in the output folder. ``converted_file`` (relative to the
output folder) and ``metadata`` (flat string map) are the only fields read;
anything else is ignored. A converted file is copied next to the original
input under the configured output subfolder so downstream links can point
at storage the engine does not own.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shlex
import shutil
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from .errors import FairflowError

log = logging.getLogger("fairflow.runner")

DEFAULT_OUTPUT_SUBFOLDER = "_converted"
DEFAULT_TIMEOUT_S = 1800


@dataclass(frozen=True)
class PreprocessingSpec:
    container_ref: str
    extra_args: tuple[tuple[str, str], ...] = ()
    output_subfolder_name: str = DEFAULT_OUTPUT_SUBFOLDER
    alters_target: bool = True

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PreprocessingSpec":
        extra = raw.get("extra_args") or {}
        if isinstance(extra, Mapping):
            extra = tuple((str(k), str(v)) for k, v in extra.items())
        else:
            extra = tuple((str(k), str(v)) for k, v in extra)
        return cls(
            container_ref=str(raw.get("container_ref", "")),
            extra_args=extra,
            output_subfolder_name=str(
                raw.get("output_subfolder_name", DEFAULT_OUTPUT_SUBFOLDER)
            ),
            alters_target=bool(raw.get("alters_target", True)),
        )

    def to_dict(self) -> dict:
        return {
            "container_ref": self.container_ref,
            "extra_args": {k: v for k, v in self.extra_args},
            "output_subfolder_name": self.output_subfolder_name,
            "alters_target": self.alters_target,
        }


@dataclass(frozen=True)
class ContainerResult:
    exit_code: int
    converted_file: Path | None
    remote_copy: Path | None
    metadata: dict[str, str]
    stdout_log: str
    stderr_log: str


@dataclass(frozen=True)
class RunJournalEntry:
    container_ref: str
    input_file: str
    exit_code: int
    duration_ms: int


def canonical_args(spec: PreprocessingSpec, input_name: str) -> list[str]:
    """The exact argument vector every container invocation receives."""
    args = ["--inputfile", f"/data/in/{input_name}", "--outputfolder", "/data/out"]
    for key, value in spec.extra_args:
        args.extend([f"--{key}", str(value)])
    return args


def validate_spec(spec: PreprocessingSpec) -> list[str]:
    """Static checks before anything runs; returns violation codes."""
    violations = []
    ref_tail = spec.container_ref.rsplit("/", 1)[-1]
    tag = ref_tail.rsplit(":", 1)[1] if ":" in ref_tail else ""
    if not tag or tag == "latest":
        violations.append("FLOATING_TAG")
    sub = spec.output_subfolder_name
    if not sub or "/" in sub or "\\" in sub or sub in (".", ".."):
        violations.append("NESTED_SUBFOLDER")
    return violations


Handler = Callable[[PreprocessingSpec, Path, Path, list[str]], tuple[int, str, str]]


class MockBackend:
    """Deterministic scripted stand-in for a container engine.

    Behaviour is chosen by substring match on the container reference, with
    built-ins for the common cases: anything mentioning ``fail`` exits
    non-zero, ``metadata-only`` emits metadata without a converted file,
    ``probe`` emits an empty result, and everything else converts the input
    to ``<stem>.ome.tiff``. Tests can script custom handlers.
    """

    def __init__(self):
        self._scripts: list[tuple[str, Handler]] = []
        self.last_args: list[str] | None = None
        self.invocations = 0

    def script(self, ref_substring: str, handler: Handler) -> None:
        self._scripts.append((ref_substring, handler))

    def run(
        self, spec: PreprocessingSpec, input_file: Path, workdir: Path, args: list[str]
    ) -> tuple[int, str, str]:
        self.last_args = list(args)
        self.invocations += 1
        for needle, handler in self._scripts:
            if needle in spec.container_ref:
                return handler(spec, input_file, workdir, args)
        ref = spec.container_ref
        if "fail" in ref:
            return 1, "", f"scripted failure for {input_file.name}\n"
        if "metadata-only" in ref:
            digest = hashlib.sha256(input_file.read_bytes()).hexdigest()
            _write_result(workdir, {"metadata": {
                "original_name": input_file.name,
                "sha256": digest,
            }})
            return 0, f"scanned {input_file.name}\n", ""
        if "probe" in ref:
            _write_result(workdir, {})
            return 0, "ok\n", ""
        return _convert(spec, input_file, workdir)


def _convert(spec: PreprocessingSpec, input_file: Path, workdir: Path) -> tuple[int, str, str]:
    out_name = input_file.stem + ".ome.tiff"
    data = input_file.read_bytes()
    (workdir / out_name).write_bytes(b"OME-TIFF\n" + data)
    ref_tail = spec.container_ref.rsplit("/", 1)[-1]
    tag = ref_tail.rsplit(":", 1)[1] if ":" in ref_tail else "unknown"
    _write_result(workdir, {
        "converted_file": out_name,
        "metadata": {"converter_version": tag, "source_format": input_file.suffix},
    })
    return 0, f"converted {input_file.name} to {out_name}\n", ""


def _write_result(workdir: Path, obj: dict) -> None:
    (workdir / "result.json").write_text(json.dumps(obj), encoding="utf-8")


class ShellBackend:
    """Runs a real engine via a configurable command template.

    Template placeholders: ``{image}``, ``{input_dir}``, ``{input_file}``,
    ``{workdir}``, ``{args}``. A timeout is reported as a non-zero exit so
    the caller's error path is uniform.
    """

    def __init__(self, template: str, timeout_s: int = DEFAULT_TIMEOUT_S):
        self.template = template
        self.timeout_s = timeout_s

    def run(
        self, spec: PreprocessingSpec, input_file: Path, workdir: Path, args: list[str]
    ) -> tuple[int, str, str]:
        cmd_text = self.template.format(
            image=spec.container_ref,
            input_dir=str(input_file.parent),
            input_file=str(input_file),
            workdir=str(workdir),
            args=" ".join(shlex.quote(a) for a in args),
        )
        cmd = shlex.split(cmd_text)
        try:
            proc = subprocess.run(
                cmd, capture_output=True, text=True, timeout=self.timeout_s
            )
        except subprocess.TimeoutExpired as exc:
            return 124, exc.stdout or "", f"timed out after {self.timeout_s}s"
        except OSError as exc:
            return 127, "", str(exc)
        return proc.returncode, proc.stdout, proc.stderr


class ContainerRunner:
    def __init__(self, backend):
        self.backend = backend
        self.journal: list[RunJournalEntry] = []

    def run(
        self,
        spec: PreprocessingSpec,
        input_file: str | Path,
        local_workdir: str | Path,
        remote_output_dir: str | Path | None = None,
    ) -> ContainerResult:
        input_file = Path(input_file)
        if not input_file.is_file():
            raise FairflowError("INPUT_MISSING", f"input file missing: {input_file}")
        workdir = Path(local_workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        args = canonical_args(spec, input_file.name)

        t0 = time.perf_counter()
        exit_code, stdout_log, stderr_log = self.backend.run(spec, input_file, workdir, args)
        duration_ms = int((time.perf_counter() - t0) * 1000)
        self.journal.append(
            RunJournalEntry(spec.container_ref, str(input_file), exit_code, duration_ms)
        )
        if exit_code != 0:
            tail = stderr_log.strip().splitlines()[-1] if stderr_log.strip() else ""
            err = FairflowError(
                "CONTAINER_NONZERO_EXIT",
                f"{spec.container_ref} exited {exit_code}: {tail}",
            )
            err.stdout_log = stdout_log
            err.stderr_log = stderr_log
            raise err

        result_path = workdir / "result.json"
        if not result_path.is_file():
            raise FairflowError(
                "RESULT_JSON_MISSING", f"{spec.container_ref} wrote no result.json"
            )
        try:
            raw = json.loads(result_path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise FairflowError("RESULT_JSON_MALFORMED", f"result.json: {exc}")
        if not isinstance(raw, dict):
            raise FairflowError("RESULT_JSON_MALFORMED", "result.json must be an object")

        metadata: dict[str, str] = {}
        raw_meta = raw.get("metadata", {})
        if raw_meta is not None:
            if not isinstance(raw_meta, dict):
                raise FairflowError("RESULT_JSON_MALFORMED", "metadata must be an object")
            for k, v in raw_meta.items():
                if isinstance(v, (dict, list)):
                    raise FairflowError(
                        "RESULT_JSON_MALFORMED", f"metadata value for {k!r} is not flat"
                    )
                metadata[str(k)] = _scalar_str(v)

        converted: Path | None = None
        remote_copy: Path | None = None
        raw_conv = raw.get("converted_file")
        if raw_conv is not None:
            if not isinstance(raw_conv, str) or not raw_conv:
                raise FairflowError("RESULT_JSON_MALFORMED", "converted_file must be a path")
            converted = workdir / raw_conv
            if not converted.is_file():
                raise FairflowError(
                    "CONVERTED_FILE_MISSING", f"result.json names missing file {raw_conv}"
                )
            if remote_output_dir is not None:
                remote_dir = Path(remote_output_dir)
                remote_dir.mkdir(parents=True, exist_ok=True)
                remote_copy = remote_dir / converted.name
                shutil.copy2(converted, remote_copy)

        log.info(
            "container %s input=%s exit=%d ms=%d",
            spec.container_ref, input_file.name, exit_code, duration_ms,
        )
        return ContainerResult(exit_code, converted, remote_copy, metadata, stdout_log, stderr_log)

    def probe(self, scratch_dir: str | Path) -> bool:
        """Cheap readiness check: run the no-op container against a stub file."""
        scratch = Path(scratch_dir)
        scratch.mkdir(parents=True, exist_ok=True)
        stub = scratch / "probe.txt"
        stub.write_text("probe\n", encoding="utf-8")
        try:
            result = self.run(
                PreprocessingSpec(container_ref="fairflow/probe:v1", alters_target=False),
                stub,
                scratch / "out",
            )
            return result.exit_code == 0
        except FairflowError:
            return False
        finally:
            shutil.rmtree(scratch / "out", ignore_errors=True)
            stub.unlink(missing_ok=True)


def _scalar_str(v) -> str:
    if isinstance(v, bool):
        return "True" if v else "False"
    return str(v)


def build_backend(kind: str, shell_template: str = "", timeout_s: int = DEFAULT_TIMEOUT_S):
    if kind == "mock":
        return MockBackend()
    if kind == "shell":
        if not shell_template:
            raise FairflowError("FATAL_CONFIG", "shell backend needs runner.shell_template")
        return ShellBackend(shell_template, timeout_s)
    raise FairflowError("FATAL_CONFIG", f"unknown runner backend {kind!r}")
