"""Virtual-time batch simulator: tick rules, injection, synthesized outputs."""

from __future__ import annotations

import hashlib
import time

import pytest

from fairflow.errors import FairflowError
from fairflow.scheduler import (
    BatchSimulator,
    JobSpec,
    JobState,
    sbatch_command,
)


def _sim(**kw):
    return BatchSimulator(**kw)


# -- submission ----------------------------------------------------------------


def test_job_ids_monotone_from_one():
    sim = _sim()
    first = sim.submit(JobSpec.build("jobs/cellpose.sh"))
    second = sim.submit(JobSpec.build("jobs/stardist.sh"))
    assert (first, second) == (1, 2)


def test_sbatch_command_rendering():
    spec = JobSpec.build(
        "jobs/cellpose.sh", {"partition": "gpu", "time": "00:15:00"}
    )
    assert sbatch_command(spec) == "sbatch --partition=gpu --time=00:15:00 jobs/cellpose.sh"
    assert sbatch_command(JobSpec.build("run.sh")) == "sbatch run.sh"
    job_id = _sim().submit(spec)
    assert job_id == 1


def test_submit_rejects_empty_script():
    with pytest.raises(FairflowError) as err:
        _sim().submit(JobSpec.build(""))
    assert err.value.code == "MALFORMED_SPEC"


def test_constructor_rejects_zero_ticks():
    with pytest.raises(FairflowError) as err:
        BatchSimulator(queue_ticks=0)
    assert err.value.code == "MALFORMED_SPEC"
    with pytest.raises(FairflowError) as err:
        BatchSimulator(run_ticks=0)
    assert err.value.code == "MALFORMED_SPEC"


# -- lifecycle by polling ---------------------------------------------------------

# Oracle: with queue_ticks=q and run_ticks=r, the state after poll number n is
#   PENDING  for n < q
#   RUNNING  for q <= n < q + r
#   COMPLETED for n >= q + r
def expected_state(n: int, q: int, r: int) -> JobState:
    if n < q:
        return JobState.PENDING
    if n < q + r:
        return JobState.RUNNING
    return JobState.COMPLETED


@pytest.mark.parametrize("q,r", [(1, 2), (2, 3), (1, 1), (3, 1)])
def test_poll_schedule_matches_oracle(q, r):
    sim = _sim(queue_ticks=q, run_ticks=r)
    job_id = sim.submit(JobSpec.build("jobs/x.sh"))
    assert sim.get(job_id).state is JobState.PENDING  # before any poll
    for n in range(1, q + r + 3):
        record = sim.poll(job_id)
        assert record.state is expected_state(n, q, r), f"poll {n}"
    done = sim.get(job_id)
    assert done.start_tick is not None
    assert done.end_tick is not None
    assert done.end_tick > done.start_tick


def test_defaults_complete_in_three_polls():
    sim = _sim()
    job_id = sim.submit(JobSpec.build("jobs/x.sh"))
    states = [sim.poll(job_id).state for _ in range(4)]
    assert states == [
        JobState.RUNNING, JobState.RUNNING, JobState.COMPLETED, JobState.COMPLETED,
    ]


def test_progress_fraction_monotone_and_caps():
    sim = _sim()  # total = 3 ticks
    job_id = sim.submit(JobSpec.build("jobs/x.sh"))
    assert sim.get(job_id).progress_fraction == 0.0
    fractions = [sim.poll(job_id).progress_fraction for _ in range(5)]
    assert fractions == [pytest.approx(1 / 3), pytest.approx(2 / 3), 1.0, 1.0, 1.0]


def test_nothing_moves_without_polling():
    sim = _sim()
    job_id = sim.submit(JobSpec.build("jobs/x.sh"))
    other = sim.submit(JobSpec.build("jobs/y.sh"))
    for _ in range(10):
        sim.poll(other)
    assert sim.get(job_id).state is JobState.PENDING  # untouched by the other job


def test_unknown_job():
    sim = _sim()
    with pytest.raises(FairflowError) as err:
        sim.poll(99)
    assert err.value.code == "UNKNOWN_JOB"
    with pytest.raises(FairflowError) as err:
        sim.get(99)
    assert err.value.code == "UNKNOWN_JOB"


# -- failure injection ---------------------------------------------------------------


def test_inject_failure_at_running():
    sim = _sim()
    sim.inject_failure("Remote_Conversion", JobState.RUNNING)
    job_id = sim.submit(JobSpec.build("SLURM_Remote_Conversion.py"))
    states = [sim.poll(job_id).state for _ in range(3)]
    assert states == [JobState.RUNNING, JobState.RUNNING, JobState.FAILED]
    assert sim.get(job_id).outputs == ()


def test_inject_failure_at_pending():
    sim = _sim()
    sim.inject_failure("cellpose", "PENDING")
    job_id = sim.submit(JobSpec.build("jobs/cellpose.sh"))
    record = sim.poll(job_id)
    assert record.state is JobState.FAILED
    assert record.start_tick is None  # never ran


def test_injection_only_hits_matching_scripts():
    sim = _sim()
    sim.inject_failure("cellpose", JobState.RUNNING)
    hit = sim.submit(JobSpec.build("jobs/cellpose.sh"))
    miss = sim.submit(JobSpec.build("jobs/stardist.sh"))
    for _ in range(3):
        hit_state = sim.poll(hit).state
        miss_state = sim.poll(miss).state
    assert hit_state is JobState.FAILED
    assert miss_state is JobState.COMPLETED


def test_clear_failures_applies_to_future_jobs():
    sim = _sim()
    sim.inject_failure("x.sh", JobState.PENDING)
    doomed = sim.submit(JobSpec.build("jobs/x.sh"))
    sim.clear_failures()
    healthy = sim.submit(JobSpec.build("jobs/x.sh"))  # injected at submit time
    assert sim.poll(doomed).state is JobState.FAILED
    for _ in range(3):
        state = sim.poll(healthy).state
    assert state is JobState.COMPLETED


def test_injection_rejects_terminal_states():
    sim = _sim()
    with pytest.raises(FairflowError) as err:
        sim.inject_failure("x", JobState.COMPLETED)
    assert err.value.code == "MALFORMED_SPEC"


# -- cancel -----------------------------------------------------------------------------


def test_cancel_pending_and_running():
    sim = _sim()
    pending = sim.submit(JobSpec.build("jobs/x.sh"))
    assert sim.cancel(pending).state is JobState.CANCELLED
    running = sim.submit(JobSpec.build("jobs/y.sh"))
    sim.poll(running)
    assert sim.cancel(running).state is JobState.CANCELLED
    with pytest.raises(FairflowError) as err:
        sim.cancel(running)
    assert err.value.code == "ALREADY_TERMINAL"
    # a cancelled job no longer advances
    assert sim.poll(pending).state is JobState.CANCELLED


# -- outputs ------------------------------------------------------------------------------


def test_outputs_one_mask_per_input(tmp_path):
    sim = _sim()
    descriptors = (
        "5f3f0c1a-0000-0000-0000-000000000001/101/nuclei_01.tif",
        "5f3f0c1a-0000-0000-0000-000000000001/102/nuclei_02.tif",
    )
    job_id = sim.submit(
        JobSpec.build("jobs/cellpose.sh", inputs=descriptors, workdir=tmp_path / "job")
    )
    for _ in range(3):
        record = sim.poll(job_id)
    assert record.state is JobState.COMPLETED
    assert [str(tmp_path / "job" / "nuclei_01_mask.tif"),
            str(tmp_path / "job" / "nuclei_02_mask.tif")] == list(record.outputs)
    # Oracle: the synthesized bytes are MASK + sha256 of the descriptor.
    for descriptor, out in zip(descriptors, record.outputs):
        digest = hashlib.sha256(descriptor.encode()).hexdigest()
        with open(out, "rb") as fh:
            data = fh.read()
        assert data == b"MASK\n" + digest.encode() + b"\n"
        assert len(data) > 0


def test_outputs_empty_without_workdir():
    sim = _sim()
    job_id = sim.submit(JobSpec.build("jobs/x.sh", inputs=("a/1/x.tif",)))
    for _ in range(3):
        record = sim.poll(job_id)
    assert record.state is JobState.COMPLETED
    assert record.outputs == ()


# -- determinism ---------------------------------------------------------------------------


def test_two_simulators_replay_identically(tmp_path):
    def run(root):
        sim = _sim()
        sim.inject_failure("flaky", JobState.RUNNING)
        trace = []
        a = sim.submit(JobSpec.build("jobs/a.sh", {"p": "1"},
                                     inputs=("r/1/x.tif",), workdir=root / "a"))
        b = sim.submit(JobSpec.build("jobs/flaky.sh"))
        for n in range(4):
            for jid in (a, b):
                rec = sim.poll(jid)
                trace.append((jid, rec.state.value, rec.progress_fraction,
                              rec.sbatch_command))
        return trace

    assert run(tmp_path / "one") == run(tmp_path / "two")


def test_realtime_mode_uses_wall_clock(tmp_path):
    sim = _sim(queue_ticks=1, run_ticks=1, realtime=True)
    job_id = sim.submit(JobSpec.build("jobs/x.sh"))
    assert sim.poll(job_id).state is JobState.PENDING  # no wall second elapsed yet
    time.sleep(1.05)
    assert sim.poll(job_id).state is JobState.RUNNING
    time.sleep(1.05)
    assert sim.poll(job_id).state is JobState.COMPLETED


def test_probe_leaves_a_cancelled_job():
    sim = _sim()
    assert sim.probe() is True
    assert sim.get(1).state is JobState.CANCELLED
