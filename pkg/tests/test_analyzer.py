"""Workflow registry, run orchestration, progress bands, result finalization."""

from __future__ import annotations

import csv
import os
import zipfile
from pathlib import Path

import pytest

from conftest import CELLPOSE_PARAMS, cellpose_definition
from fairflow.analyzer import (
    AnalyzerEngine,
    InputSelection,
    OutputOptions,
    ParamField,
    RunRequest,
    WorkflowDefinition,
    WorkflowRegistry,
    validate_definition,
)
from fairflow.errors import FairflowError
from fairflow.provenance import EventKind
from fairflow.scheduler import JobState


# -- definitions and registry ---------------------------------------------------


def test_definition_version_is_release_tag():
    defn = cellpose_definition()
    assert defn.version == "v1.3.1"
    assert defn.job_script == "jobs/cellpose.sh"
    tagged = WorkflowDefinition.build(
        "x", "https://github.com/team/x/releases/tag/v2.0.0", "team/x:v2.0.0"
    )
    assert tagged.version == "v2.0.0"


@pytest.mark.parametrize(
    "url",
    [
        "https://github.com/TorecLuik/W_NucleiSegmentation-Cellpose/tree/v1.3.1",
        "https://github.com/team/tool/releases/tag/v1.0.0",
    ],
)
def test_pinned_repo_urls_accepted(url):
    validate_definition(WorkflowDefinition.build("x", url, "team/x:v1"))


@pytest.mark.parametrize(
    "url",
    [
        "https://github.com/team/tool",                      # no release pin
        "https://github.com/team/tool/tree/",                # empty ref
        "http://github.com/team/tool/tree/v1",               # not https
        "https://gitlab.com/team/tool/tree/v1",              # wrong host
        "https://github.com/team/tool/commit/abc123",        # not a release
        "",
    ],
)
def test_unpinned_repo_urls_rejected(url):
    with pytest.raises(FairflowError) as err:
        validate_definition(WorkflowDefinition.build("x", url, "team/x:v1"))
    assert err.value.code == "INVALID_REPO_URL"


def test_untagged_image_rejected():
    with pytest.raises(FairflowError) as err:
        validate_definition(WorkflowDefinition.build(
            "x", "https://github.com/t/x/tree/v1", "team/x"
        ))
    assert err.value.code == "UNTAGGED_IMAGE"


def test_bad_param_schema_rejected():
    with pytest.raises(FairflowError) as err:
        validate_definition(WorkflowDefinition.build(
            "x", "https://github.com/t/x/tree/v1", "t/x:v1",
            param_schema=[ParamField("p", "decimal")],
        ))
    assert err.value.code == "VALIDATION_FAILED"
    with pytest.raises(FairflowError) as err:
        validate_definition(WorkflowDefinition.build(
            "x", "https://github.com/t/x/tree/v1", "t/x:v1",
            param_schema=[ParamField("p", "enum")],
        ))
    assert err.value.code == "VALIDATION_FAILED"


def test_registry_crud(stack):
    defn = cellpose_definition()
    stack.registry.register(defn)
    assert stack.registry.get("cellpose") == defn
    with pytest.raises(FairflowError) as err:
        stack.registry.register(defn)
    assert err.value.code == "DUPLICATE_NAME"
    assert [d.name for d in stack.registry.list()] == ["cellpose"]
    assert [d.name for d in stack.registry.list("nuclei")] == ["cellpose"]  # description
    assert stack.registry.list("stardist") == []
    updated = WorkflowDefinition.build(
        "cellpose",
        "https://github.com/TorecLuik/W_NucleiSegmentation-Cellpose/tree/v2.0.0",
        "torecluik/t_nucleisegmentation-cellpose:v2.0.0",
    )
    stack.registry.update("cellpose", updated)
    assert stack.registry.get("cellpose").version == "v2.0.0"
    stack.registry.remove("cellpose")
    with pytest.raises(FairflowError) as err:
        stack.registry.get("cellpose")
    assert err.value.code == "UNKNOWN_WORKFLOW"
    with pytest.raises(FairflowError) as err:
        stack.registry.remove("cellpose")
    assert err.value.code == "UNKNOWN_WORKFLOW"


def test_registry_render_param_form(stack):
    stack.registry.register(cellpose_definition())
    form = stack.registry.render_param_form("cellpose")
    assert [f["name"] for f in form] == [
        "nuc_channel", "use_gpu", "cp_model", "diameter", "prob_threshold", "use_zarr",
    ]
    by_name = {f["name"]: f for f in form}
    assert by_name["nuc_channel"] == {
        "name": "nuc_channel", "type": "int", "default": None, "description": "",
    }
    assert by_name["cp_model"]["options"] == ["nuclei", "cyto"]
    assert by_name["use_gpu"]["default"] is False


def test_ini_persistence_round_trip(stack):
    stack.registry.register(cellpose_definition())
    stack.registry.register(WorkflowDefinition.build(
        "stardist",
        "https://github.com/team/stardist/tree/v0.8.0",
        "team/stardist:v0.8.0",
    ))
    text = stack.registry.ini_text()
    assert "[MODELS]" in text
    assert "cellpose_repo = https://github.com/TorecLuik/W_NucleiSegmentation-Cellpose/tree/v1.3.1" in text
    assert "cellpose_image = torecluik/t_nucleisegmentation-cellpose:v1.3.1" in text
    assert "cellpose_job = jobs/cellpose.sh" in text
    assert "cellpose_job_partition = gpu" in text
    assert "cellpose_job_time = 00:15:00" in text

    reloaded = WorkflowRegistry(stack.registry.config_path)
    assert reloaded.list() == stack.registry.list()
    # saving what was loaded reproduces the file byte for byte
    reloaded.save()
    assert reloaded.ini_text() == text


def test_registry_replace_all(stack):
    stack.registry.register(cellpose_definition())
    fresh = [
        WorkflowDefinition.build("a", "https://github.com/t/a/tree/v1", "t/a:v1"),
        WorkflowDefinition.build("b", "https://github.com/t/b/tree/v1", "t/b:v1"),
    ]
    stack.registry.replace_all(fresh)
    assert [d.name for d in stack.registry.list()] == ["a", "b"]
    with pytest.raises(FairflowError) as err:
        stack.registry.replace_all(fresh + fresh[:1])
    assert err.value.code == "DUPLICATE_NAME"


# -- starting runs ------------------------------------------------------------------


def _images(stack, dataset, names=("nuclei_01.tif", "nuclei_02.tif")):
    created = []
    for name in names:
        created.append(
            stack.repo.create_object("Image", name, "rreits", "Reits", dataset.id)
        )
    return created


def _request(stack, dataset, images, target=None, params=None, **output_kw):
    return RunRequest(
        workflow_name="cellpose",
        input_selection=InputSelection(dataset.id, tuple(i.id for i in images)),
        output_options=OutputOptions(
            target_dataset_id=(target or dataset).id, **output_kw
        ),
        params=dict(CELLPOSE_PARAMS if params is None else params),
    )


def _ready(stack):
    stack.registry.register(cellpose_definition())
    dataset = stack.dataset("Input images")
    images = _images(stack, dataset)
    target = stack.dataset("Segmentation masks")
    return dataset, images, target


def test_start_run_validations(stack):
    dataset, images, target = _ready(stack)
    good = _request(stack, dataset, images, target)

    with pytest.raises(FairflowError) as err:
        stack.engine.start_run(
            RunRequest("ghost", good.input_selection, good.output_options, dict(CELLPOSE_PARAMS)),
            "rreits", "Reits",
        )
    assert err.value.code == "UNKNOWN_WORKFLOW"

    missing = {k: v for k, v in CELLPOSE_PARAMS.items() if k != "nuc_channel"}
    with pytest.raises(FairflowError) as err:
        stack.engine.start_run(
            _request(stack, dataset, images, target, params=missing), "rreits", "Reits"
        )
    assert err.value.code == "VALIDATION_FAILED"
    assert "nuc_channel" in err.value.message

    for bad in (
        {**CELLPOSE_PARAMS, "nuc_channel": "three"},
        {**CELLPOSE_PARAMS, "nuc_channel": True},
        {**CELLPOSE_PARAMS, "use_gpu": "no"},
        {**CELLPOSE_PARAMS, "cp_model": "membrane"},
        {**CELLPOSE_PARAMS, "mystery": 1},
    ):
        with pytest.raises(FairflowError) as err:
            stack.engine.start_run(
                _request(stack, dataset, images, target, params=bad), "rreits", "Reits"
            )
        assert err.value.code == "VALIDATION_FAILED"

    with pytest.raises(FairflowError) as err:
        stack.engine.start_run(
            RunRequest("cellpose", InputSelection(dataset.id, ()), good.output_options,
                       dict(CELLPOSE_PARAMS)),
            "rreits", "Reits",
        )
    assert err.value.code == "VALIDATION_FAILED"

    foreign = stack.dataset("Elsewhere")
    stranger = stack.repo.create_object("Image", "other.tif", "rreits", "Reits", foreign.id)
    with pytest.raises(FairflowError) as err:
        stack.engine.start_run(
            RunRequest("cellpose", InputSelection(dataset.id, (stranger.id,)),
                       good.output_options, dict(CELLPOSE_PARAMS)),
            "rreits", "Reits",
        )
    assert err.value.code == "VALIDATION_FAILED"

    with pytest.raises(FairflowError) as err:
        stack.engine.start_run(
            RunRequest("cellpose", good.input_selection,
                       OutputOptions(target_dataset_id=424242), dict(CELLPOSE_PARAMS)),
            "rreits", "Reits",
        )
    assert err.value.code == "TARGET_DATASET_MISSING"
    with pytest.raises(FairflowError) as err:
        stack.engine.start_run(
            RunRequest("cellpose", good.input_selection,
                       OutputOptions(target_dataset_id=images[0].id), dict(CELLPOSE_PARAMS)),
            "rreits", "Reits",
        )
    assert err.value.code == "TARGET_DATASET_MISSING"

    # nothing was recorded by any failed attempt
    assert stack.store.project_runs() == []


def test_param_defaults_fill_in(stack):
    stack.registry.register(cellpose_definition(nuc_channel_default=3))
    dataset = stack.dataset()
    images = _images(stack, dataset)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, params={}), "rreits", "Reits"
    )
    events = list(stack.store.events(run_uuid))
    created = events[0]
    assert created.payload["Param_nuc_channel"] == "3"
    assert created.payload["Param_use_gpu"] == "False"


def test_run_created_event_payload(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    created = list(stack.store.events(run_uuid))[0]
    assert created.event_kind is EventKind.RUN_CREATED
    assert created.task_name == "cellpose"
    assert created.user_id == stack.repo.ensure_user("rreits")
    assert created.group_id == stack.repo.ensure_group("Reits")
    assert created.payload == {
        "name": "Slurm Workflow",
        "workflow": "cellpose",
        "version": "v1.3.1",
        "main_task_name": "cellpose",
        "container_image": "torecluik/t_nucleisegmentation-cellpose:v1.3.1",
        "target_dataset": str(target.id),
        "Param_nuc_channel": "3",
        "Param_use_gpu": "False",
        "Param_cp_model": "nuclei",
        "Param_diameter": "0",
        "Param_prob_threshold": "0.5",
        "Param_use_zarr": "False",
    }


# -- full runs -----------------------------------------------------------------------


def test_run_to_done_event_and_progress_sequence(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    projection = stack.engine.run_to_completion(run_uuid)
    assert projection.status == "DONE"
    assert projection.progress == 100.0
    assert projection.name == "Slurm Workflow"
    assert projection.main_task_name == "cellpose"

    events = list(stack.store.events(run_uuid))
    kinds = [e.event_kind.value for e in events]
    assert kinds == [
        "RUN_CREATED",
        "TASK_STARTED", "JOB_SUBMITTED",            # main
        "STATUS_UPDATE", "PROGRESS_UPDATE", "STATUS_UPDATE",
        "TASK_STARTED", "JOB_SUBMITTED",            # retrieval
        "STATUS_UPDATE", "PROGRESS_UPDATE", "STATUS_UPDATE",
        "RESULT_ATTACHED", "RESULT_ATTACHED",
        "TASK_DONE",
    ]
    # the fixed progress bands make a finished main phase read exactly 90
    series = [
        float(e.payload["progress"])
        for e in events
        if e.event_kind in (EventKind.STATUS_UPDATE, EventKind.PROGRESS_UPDATE)
    ]
    assert series == [50.0, 70.0, 90.0, 93.3, 96.7, 100.0]
    assert series == sorted(series)
    statuses = [
        e.payload["status"] for e in events if e.event_kind is EventKind.STATUS_UPDATE
    ]
    assert statuses == ["JOB_RUNNING", "JOB_COMPLETED", "JOB_RUNNING", "JOB_COMPLETED"]
    done = events[-1]
    assert done.payload == {"images": "2"}
    assert done.task_name == "cellpose"
    # the retrieval phase events carry the retrieval task name
    assert events[6].task_name == "SLURM_Get_Results.py"
    assert events[6].payload == {"kind": "RETRIEVE"}
    assert stack.engine.live_runs() == []


def test_zarr_inputs_get_a_conversion_phase(stack):
    stack.registry.register(cellpose_definition())
    dataset = stack.dataset()
    images = _images(stack, dataset, names=("plate.zarr", "extra.tif"))
    target = stack.dataset("masks")
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    projection = stack.engine.run_to_completion(run_uuid)
    assert projection.status == "DONE"
    events = list(stack.store.events(run_uuid))
    started = [e for e in events if e.event_kind is EventKind.TASK_STARTED]
    assert [(e.task_name, e.payload["kind"]) for e in started] == [
        ("CONVERT_ZARR_TO_TIFF", "CONVERT"),
        ("cellpose", "MAIN"),
        ("SLURM_Get_Results.py", "RETRIEVE"),
    ]
    submitted = [e for e in events if e.event_kind is EventKind.JOB_SUBMITTED]
    assert submitted[0].payload["sbatch_command"] == "sbatch SLURM_Remote_Conversion.py"
    # conversion occupies the 0-30 band
    series = [
        float(e.payload["progress"])
        for e in events
        if e.event_kind in (EventKind.STATUS_UPDATE, EventKind.PROGRESS_UPDATE)
    ]
    assert series[:3] == [10.0, 20.0, 30.0]
    assert series == sorted(series)


def test_conversion_failure_fails_the_run(stack):
    stack.registry.register(cellpose_definition())
    dataset = stack.dataset()
    images = _images(stack, dataset, names=("plate.zarr",))
    target = stack.dataset("masks")
    stack.scheduler.inject_failure("Remote_Conversion", JobState.RUNNING)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    projection = stack.engine.run_to_completion(run_uuid)
    assert projection.status == "FAILED"
    assert projection.progress == 0.0
    last = list(stack.store.events(run_uuid))[-1]
    assert last.event_kind is EventKind.TASK_FAILED
    assert last.payload["failed_task"] == "CONVERT_ZARR_TO_TIFF"
    # no masks were produced or attached anywhere
    assert stack.repo.list_children(target.id) == []
    assert stack.engine.live_runs() == []


def test_main_failure_reports_workflow_task(stack):
    dataset, images, target = _ready(stack)
    stack.scheduler.inject_failure("cellpose", JobState.PENDING)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    projection = stack.engine.run_to_completion(run_uuid)
    assert projection.status == "FAILED"
    last = list(stack.store.events(run_uuid))[-1]
    assert last.payload["failed_task"] == "cellpose"
    assert last.task_name == "cellpose"


# -- finalization ---------------------------------------------------------------------


def test_masks_imported_copy_mode_with_full_recipe(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    stack.engine.run_to_completion(run_uuid)

    masks = stack.repo.list_children(target.id)
    assert [m.name for m in masks] == ["nuclei_01_mask.tif", "nuclei_02_mask.tif"]
    assert stack.engine.finalize_outputs(run_uuid) == [m.id for m in masks]
    fileset_modes = {f.transfer_mode.value for f in stack.repo.list_filesets()}
    assert fileset_modes == {"COPY"}
    for mask in masks:
        block = stack.repo.get_annotations(mask.id)[0]
        assert block.namespace == "biomero.workflow"
        pairs = dict(block.pairs)
        assert [k for k, _ in block.pairs] == [
            "Workflow_ID", "Workflow_Name", "Version", "Task_Name",
            "Container_Image", "Sbatch_Command", "Input_Image_ID",
            "Param_nuc_channel", "Param_use_gpu", "Param_cp_model",
            "Param_diameter", "Param_prob_threshold", "Param_use_zarr",
        ]
        assert pairs["Workflow_ID"] == run_uuid
        assert pairs["Workflow_Name"] == "cellpose"
        assert pairs["Version"] == "v1.3.1"
        assert pairs["Task_Name"] == "cellpose"
        assert pairs["Container_Image"] == "torecluik/t_nucleisegmentation-cellpose:v1.3.1"
        assert pairs["Sbatch_Command"] == (
            "sbatch --partition=gpu --time=00:15:00 jobs/cellpose.sh"
        )
        assert pairs["Param_nuc_channel"] == "3"
        assert pairs["Param_use_gpu"] == "False"
        assert pairs["Param_cp_model"] == "nuclei"
        assert pairs["Param_diameter"] == "0"
        assert pairs["Param_prob_threshold"] == "0.5"
        assert pairs["Param_use_zarr"] == "False"
    # each mask points back at the input that produced it
    by_name = {m.name: dict(stack.repo.get_annotations(m.id)[0].pairs) for m in masks}
    assert by_name["nuclei_01_mask.tif"]["Input_Image_ID"] == str(images[0].id)
    assert by_name["nuclei_02_mask.tif"]["Input_Image_ID"] == str(images[1].id)
    # the mask files are real copies with the synthesized bytes
    entry = stack.repo.list_filesets()[0].entries[0]
    assert not os.path.islink(entry.link_path)
    with open(entry.link_path, "rb") as fh:
        assert fh.read().startswith(b"MASK\n")


def test_search_by_run_uuid_returns_exactly_the_outputs(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target, attach_zip=True, attach_tables=True),
        "rreits", "Reits",
    )
    stack.engine.run_to_completion(run_uuid)
    masks = stack.repo.list_children(target.id)
    hits = stack.repo.search_by_value(run_uuid, "Reits")
    assert [h.id for h in hits] == [m.id for m in masks]


def test_rename_pattern(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target, rename_pattern="exp42_{name}"),
        "rreits", "Reits",
    )
    stack.engine.run_to_completion(run_uuid)
    masks = stack.repo.list_children(target.id)
    assert [m.name for m in masks] == [
        "exp42_nuclei_01_mask.tif", "exp42_nuclei_02_mask.tif",
    ]


def test_attachments_zip_and_table(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target, attach_zip=True, attach_tables=True),
        "rreits", "Reits",
    )
    stack.engine.run_to_completion(run_uuid)
    blocks = [
        b for b in stack.repo.get_annotations(target.id)
        if b.namespace == "biomero.workflow.attachments"
    ]
    assert len(blocks) == 1
    extras = dict(blocks[0].pairs)
    assert set(extras) == {"zip", "table"}
    with zipfile.ZipFile(extras["zip"]) as zf:
        assert sorted(zf.namelist()) == ["nuclei_01_mask.tif", "nuclei_02_mask.tif"]
    with open(extras["table"], newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["output", "bytes"]
    assert [r[0] for r in rows[1:]] == ["nuclei_01_mask.tif", "nuclei_02_mask.tif"]
    assert all(int(r[1]) > 0 for r in rows[1:])


def test_no_attachments_block_by_default(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    stack.engine.run_to_completion(run_uuid)
    assert [
        b for b in stack.repo.get_annotations(target.id)
        if b.namespace == "biomero.workflow.attachments"
    ] == []


def test_email_option_adds_mail_user_to_main_only(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target, email_on_done=True), "rreits", "Reits"
    )
    stack.engine.run_to_completion(run_uuid)
    submitted = [
        e for e in list(stack.store.events(run_uuid))
        if e.event_kind is EventKind.JOB_SUBMITTED
    ]
    main, retrieve = submitted
    assert main.payload["sbatch_command"] == (
        "sbatch --partition=gpu --time=00:15:00 --mail-user=rreits jobs/cellpose.sh"
    )
    assert retrieve.payload["sbatch_command"] == "sbatch SLURM_Get_Results.py"


def test_request_version_overrides_repo_tag(stack):
    dataset, images, target = _ready(stack)
    request = RunRequest(
        workflow_name="cellpose",
        input_selection=InputSelection(dataset.id, tuple(i.id for i in images)),
        output_options=OutputOptions(target_dataset_id=target.id),
        params=dict(CELLPOSE_PARAMS),
        version="v9.9.9",
    )
    run_uuid = stack.engine.start_run(request, "rreits", "Reits")
    stack.engine.run_to_completion(run_uuid)
    assert list(stack.store.events(run_uuid))[0].payload["version"] == "v9.9.9"
    mask = stack.repo.list_children(target.id)[0]
    assert dict(stack.repo.get_annotations(mask.id)[0].pairs)["Version"] == "v9.9.9"


def test_finalize_outputs_guarded_until_done(stack):
    dataset, images, target = _ready(stack)
    run_uuid = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    with pytest.raises(FairflowError) as err:
        stack.engine.finalize_outputs(run_uuid)
    assert err.value.code == "VALIDATION_FAILED"
    with pytest.raises(FairflowError) as err:
        stack.engine.advance_run("no-such-run")
    assert err.value.code == "UNKNOWN_RUN"


def test_advance_all_drives_concurrent_runs(stack):
    dataset, images, target = _ready(stack)
    first = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    second = stack.engine.start_run(
        _request(stack, dataset, images, target), "rreits", "Reits"
    )
    assert set(stack.engine.live_runs()) == {first, second}
    for _ in range(20):
        stack.engine.advance_all()
        if not stack.engine.live_runs():
            break
    assert stack.engine.live_runs() == []
    assert stack.engine.projection(first).status == "DONE"
    assert stack.engine.projection(second).status == "DONE"
    # both runs attached two masks each to the shared target
    assert len(stack.repo.list_children(target.id)) == 4
