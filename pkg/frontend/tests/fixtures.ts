/** Canned wire payloads for tests, shaped exactly like the service's JSON. */

import type {
  AnnotationBlock,
  MonitorRow,
  OrderJson,
  RemoteListing,
  RepoObjectJson,
  RunRow,
  SessionInfo,
  TemplateJson,
  WorkflowJson,
} from "../src/types.js";

export const SESSION_USER: SessionInfo = {
  username: "rreits",
  group: "Reits",
  is_admin: false,
  display_name: "Ron Reits",
};

export const SESSION_ADMIN: SessionInfo = {
  username: "kai",
  group: "Krawczyk",
  is_admin: true,
  display_name: "Kai Krawczyk",
};

export const DATASET: RepoObjectJson = {
  id: 3,
  kind: "Dataset",
  name: "ds1",
  owner: "rreits",
  group: "Reits",
  parent_id: null,
  created_at: "2026-08-19 09:00:00",
  acquired_at: null,
};

export const SCREEN: RepoObjectJson = {
  id: 5,
  kind: "Screen",
  name: "screen1",
  owner: "rreits",
  group: "Reits",
  parent_id: null,
  created_at: "2026-08-19 09:00:00",
  acquired_at: null,
};

export const PROJECT: RepoObjectJson = {
  id: 8,
  kind: "Project",
  name: "projA",
  owner: "rreits",
  group: "Reits",
  parent_id: null,
  created_at: "2026-08-19 09:00:00",
  acquired_at: null,
};

export const PROJECT_DATASET: RepoObjectJson = {
  id: 9,
  kind: "Dataset",
  name: "dsB",
  owner: "rreits",
  group: "Reits",
  parent_id: 8,
  created_at: "2026-08-19 09:00:00",
  acquired_at: null,
};

export const IMAGES: RepoObjectJson[] = [
  {
    id: 11,
    kind: "Image",
    name: "nuclei_01.tif",
    owner: "rreits",
    group: "Reits",
    parent_id: 3,
    created_at: "2026-08-19 09:05:00",
    acquired_at: "2026-08-19 09:05:00",
  },
  {
    id: 12,
    kind: "Image",
    name: "nuclei_02.tif",
    owner: "rreits",
    group: "Reits",
    parent_id: 3,
    created_at: "2026-08-19 09:05:01",
    acquired_at: "2026-08-19 09:05:01",
  },
];

export const MONITOR_ROWS: MonitorRow[] = [
  {
    uuid: "0a1b2c3d-0000-4000-8000-000000000001",
    file_names: ["a.czi", "b.czi"],
    stage: "Import Completed",
    destination_id: 3,
    destination_type: "Dataset",
    timestamp: "2026-08-19 09:15:04",
    elapsed_time: 2,
    group_name: "Reits",
    error_message: null,
  },
  {
    uuid: "0a1b2c3d-0000-4000-8000-000000000002",
    file_names: ["experiment.lif"],
    stage: "Import Preprocessing",
    destination_id: 3,
    destination_type: "Dataset",
    timestamp: "2026-08-19 09:16:11",
    elapsed_time: 5,
    group_name: "Reits",
    error_message: null,
  },
];

export function makeOrder(partial: Partial<OrderJson> = {}): OrderJson {
  return {
    uuid: "ord-0000-0001",
    group: "Reits",
    username: "rreits",
    destination_id: 3,
    destination_type: "Dataset",
    files: ["a.czi", "b.czi"],
    file_names: ["a.czi", "b.czi"],
    preprocessing: null,
    status: "PENDING",
    created_at: "2026-08-19 09:15:02",
    updated_at: "2026-08-19 09:15:02",
    error_message: null,
    ...partial,
  };
}

// browse requests are subfolder-relative (`path`), but each entry's `path`
// is relative to the remote root, so it carries the group's subfolder prefix
export const REMOTE_ROOT: RemoteListing = {
  path: "",
  entries: [
    { name: "plates", path: "coreReits/plates", is_dir: true, size: null },
    { name: "a.czi", path: "coreReits/a.czi", is_dir: false, size: 7 },
    { name: "b.czi", path: "coreReits/b.czi", is_dir: false, size: 7 },
  ],
};

export const REMOTE_PLATES: RemoteListing = {
  path: "plates",
  entries: [
    {
      name: "experiment.lif",
      path: "coreReits/plates/experiment.lif",
      is_dir: false,
      size: 9,
    },
  ],
};

export const CELLPOSE: WorkflowJson = {
  name: "cellpose",
  description: "Nuclei segmentation with Cellpose",
  github_repo: "https://github.com/TorecLuik/W_NucleiSegmentation-Cellpose/tree/v1.3.1",
  container_image: "torecluik/t_nucleisegmentation-cellpose:v1.3.1",
  job_script: "jobs/cellpose.sh",
  sbatch_params: { partition: "gpu", time: "00:15:00" },
  param_schema: [
    { name: "nuc_channel", type: "int", default: 3, description: "" },
    { name: "use_gpu", type: "bool", default: false, description: "" },
    { name: "cp_model", type: "enum", default: "nuclei", description: "", options: ["nuclei", "cyto"] },
    { name: "diameter", type: "int", default: 0, description: "" },
    { name: "prob_threshold", type: "float", default: 0.5, description: "" },
    { name: "use_zarr", type: "bool", default: false, description: "" },
  ],
  version: "v1.3.1",
};

export const STARDIST: WorkflowJson = {
  name: "stardist",
  description: "StarDist nucleus detection",
  github_repo: "https://github.com/TorecLuik/W_SpotCounting-StarDist/tree/v1.0.2",
  container_image: "torecluik/w_spotcounting-stardist:v1.0.2",
  job_script: "jobs/stardist.sh",
  sbatch_params: { partition: "cpu" },
  param_schema: [{ name: "prob_thresh", type: "float", default: 0.5, description: "" }],
  version: "v1.0.2",
};

export const RUN_ROWS: RunRow[] = [
  {
    run_uuid: "run-0000-0001",
    user_id: 1,
    group_id: 1,
    user: "rreits",
    group: "Reits",
    name: "Slurm Workflow",
    task: "cellpose",
    status: "DONE",
    progress: 100.0,
    start_time: "2026-08-19 10:00:00",
    main_task_name: "conversion",
  },
  {
    run_uuid: "run-0000-0002",
    user_id: 1,
    group_id: 1,
    user: "rreits",
    group: "Reits",
    name: "Slurm Workflow",
    task: "cellpose",
    status: "FAILED",
    progress: 0.0,
    start_time: "2026-08-19 10:05:00",
    main_task_name: "conversion",
  },
];

export const BIOSAMPLE_TEMPLATE: TemplateJson = {
  form_id: "REMBI_Biosample",
  version: 1,
  schema: {
    Biosample: {
      type: "group",
      required: true,
      fields: {
        organism: {
          type: "enum",
          required: true,
          options: ["Homo sapiens", "Mus musculus"],
        },
        description: { type: "string" },
      },
    },
  },
  published_by: "kai",
  published_at: "2026-08-19 08:00:00",
};

export const IMPORT_BLOCK: AnnotationBlock = {
  namespace: "omeroadi.import",
  pairs: [
    ["Added by", "rreits"],
    ["UUID", "0a1b2c3d-0000-4000-8000-000000000001"],
    ["Filepath", "/remote/coreReits/a.czi"],
  ],
  created_at: "2026-08-19 09:15:04",
};
