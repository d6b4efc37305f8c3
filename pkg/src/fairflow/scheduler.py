"""Deterministic batch scheduler simulator with poll-driven virtual time.

Nothing moves between polls: a submitted job sits PENDING for
``queue_ticks`` polls, runs for ``run_ticks`` more, then completes (one
synthesized ``<input-stem>_mask.tif`` per declared input) or fails if a
matching failure was injected. Job ids are handed out monotonically from 1.
Real-time mode maps ticks to wall seconds for demo deployments; the default
is fully virtual so tests replay identically.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping

from .errors import FairflowError

log = logging.getLogger("fairflow.scheduler")

DEFAULT_QUEUE_TICKS = 1
DEFAULT_RUN_TICKS = 2


class JobState(str, Enum):
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    CANCELLED = "CANCELLED"


TERMINAL_JOB_STATES = {JobState.COMPLETED, JobState.FAILED, JobState.CANCELLED}


@dataclass(frozen=True)
class JobSpec:
    script: str
    sbatch_params: tuple[tuple[str, str], ...] = ()
    inputs: tuple[str, ...] = ()
    workdir: str = ""

    @classmethod
    def build(
        cls,
        script: str,
        sbatch_params: Mapping[str, str] | None = None,
        inputs: tuple[str, ...] | list[str] = (),
        workdir: str | Path = "",
    ) -> "JobSpec":
        params = tuple((str(k), str(v)) for k, v in (sbatch_params or {}).items())
        return cls(script, params, tuple(inputs), str(workdir))


@dataclass(frozen=True)
class JobRecord:
    job_id: int
    state: JobState
    submit_tick: int
    start_tick: int | None
    end_tick: int | None
    outputs: tuple[str, ...]
    sbatch_command: str
    progress_fraction: float


def sbatch_command(spec: JobSpec) -> str:
    """Submission line: 'sbatch --k=v ... <script>', params in given order."""
    parts = ["sbatch"]
    parts.extend(f"--{k}={v}" for k, v in spec.sbatch_params)
    parts.append(spec.script)
    return " ".join(parts)


class _Job:
    def __init__(self, job_id: int, spec: JobSpec, submit_tick: int, fail_at: JobState | None):
        self.job_id = job_id
        self.spec = spec
        self.state = JobState.PENDING
        self.polls = 0
        self.submit_tick = submit_tick
        self.start_tick: int | None = None
        self.end_tick: int | None = None
        self.outputs: tuple[str, ...] = ()
        self.fail_at = fail_at
        self.submit_wall = time.monotonic()
        self.command = sbatch_command(spec)


class BatchSimulator:
    def __init__(
        self,
        queue_ticks: int = DEFAULT_QUEUE_TICKS,
        run_ticks: int = DEFAULT_RUN_TICKS,
        realtime: bool = False,
    ):
        if queue_ticks < 1 or run_ticks < 1:
            raise FairflowError("MALFORMED_SPEC", "tick counts must be at least 1")
        self.queue_ticks = queue_ticks
        self.run_ticks = run_ticks
        self.realtime = realtime
        self._jobs: dict[int, _Job] = {}
        self._injections: list[tuple[str, JobState]] = []
        self._next_id = 1
        self._clock = 0
        self._lock = threading.RLock()

    def inject_failure(self, script_substring: str, at_state: JobState | str) -> None:
        """Future jobs whose script contains the substring fail at that state."""
        at_state = JobState(at_state)
        if at_state not in (JobState.PENDING, JobState.RUNNING):
            raise FairflowError("MALFORMED_SPEC", "failures inject at PENDING or RUNNING")
        with self._lock:
            self._injections.append((script_substring, at_state))

    def clear_failures(self) -> None:
        with self._lock:
            self._injections.clear()

    def submit(self, spec: JobSpec) -> int:
        if not spec.script:
            raise FairflowError("MALFORMED_SPEC", "job script must be non-empty")
        with self._lock:
            fail_at = None
            for needle, at_state in self._injections:
                if needle in spec.script:
                    fail_at = at_state
                    break
            self._clock += 1
            job = _Job(self._next_id, spec, self._clock, fail_at)
            self._jobs[job.job_id] = job
            self._next_id += 1
            log.info("job %d submitted: %s", job.job_id, job.command)
            return job.job_id

    def poll(self, job_id: int) -> JobRecord:
        """Advance the job by one tick (virtual mode) and report its state."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise FairflowError("UNKNOWN_JOB", f"no job {job_id}")
            if job.state not in TERMINAL_JOB_STATES:
                self._clock += 1
                if self.realtime:
                    job.polls = int(time.monotonic() - job.submit_wall)
                else:
                    job.polls += 1
                self._advance(job)
            return self._record(job)

    def get(self, job_id: int) -> JobRecord:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise FairflowError("UNKNOWN_JOB", f"no job {job_id}")
            return self._record(job)

    def cancel(self, job_id: int) -> JobRecord:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise FairflowError("UNKNOWN_JOB", f"no job {job_id}")
            if job.state in TERMINAL_JOB_STATES:
                raise FairflowError("ALREADY_TERMINAL", f"job {job_id} is {job.state.value}")
            self._clock += 1
            job.state = JobState.CANCELLED
            job.end_tick = self._clock
            return self._record(job)

    def _advance(self, job: _Job) -> None:
        if job.state is JobState.PENDING and job.polls >= self.queue_ticks:
            if job.fail_at is JobState.PENDING:
                job.state = JobState.FAILED
                job.end_tick = self._clock
                return
            job.state = JobState.RUNNING
            job.start_tick = self._clock
        if job.state is JobState.RUNNING and job.polls >= self.queue_ticks + self.run_ticks:
            job.end_tick = self._clock
            if job.fail_at is JobState.RUNNING:
                job.state = JobState.FAILED
            else:
                job.state = JobState.COMPLETED
                job.outputs = self._synthesize_outputs(job)

    def _synthesize_outputs(self, job: _Job) -> tuple[str, ...]:
        """One deterministic mask file per input, under the job workdir."""
        if not job.spec.workdir:
            return ()
        workdir = Path(job.spec.workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        outputs = []
        for descriptor in job.spec.inputs:
            stem = Path(descriptor).stem
            out = workdir / f"{stem}_mask.tif"
            digest = hashlib.sha256(descriptor.encode("utf-8")).hexdigest()
            out.write_bytes(b"MASK\n" + digest.encode("ascii") + b"\n")
            outputs.append(str(out))
        return tuple(outputs)

    def _record(self, job: _Job) -> JobRecord:
        total = self.queue_ticks + self.run_ticks
        if job.state is JobState.COMPLETED:
            fraction = 1.0
        else:
            fraction = min(1.0, job.polls / total)
        return JobRecord(
            job_id=job.job_id,
            state=job.state,
            submit_tick=job.submit_tick,
            start_tick=job.start_tick,
            end_tick=job.end_tick,
            outputs=job.outputs,
            sbatch_command=job.command,
            progress_fraction=fraction,
        )

    def probe(self) -> bool:
        """Readiness check: a throwaway job can be submitted and cancelled."""
        try:
            job_id = self.submit(JobSpec.build("probe.sh"))
            self.cancel(job_id)
            return True
        except FairflowError:
            return False
