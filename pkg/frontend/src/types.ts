/** Wire shapes returned by the HTTP service. The UI never reshapes them. */

export interface SessionInfo {
  username: string;
  group: string;
  is_admin: boolean;
  display_name: string;
}

export interface OrderJson {
  uuid: string;
  group: string;
  username: string;
  destination_id: number;
  destination_type: string;
  files: string[];
  file_names: string[];
  preprocessing: Record<string, unknown> | null;
  status: string;
  created_at: string;
  updated_at: string;
  error_message: string | null;
}

export interface MonitorRow {
  uuid: string;
  file_names: string[];
  stage: string;
  destination_id: number;
  destination_type: string;
  timestamp: string;
  elapsed_time: number;
  group_name: string;
  error_message: string | null;
}

export interface RemoteEntry {
  name: string;
  path: string;
  is_dir: boolean;
  size: number | null;
}

export interface RemoteListing {
  path: string;
  entries: RemoteEntry[];
}

export interface Mapping {
  group: string;
  subfolder: string;
}

export interface RepoObjectJson {
  id: number;
  kind: string;
  name: string;
  owner: string;
  group: string;
  parent_id: number | null;
  created_at: string;
  acquired_at: string | null;
}

export interface AnnotationBlock {
  namespace: string;
  pairs: [string, string][];
  created_at: string;
}

export interface ParamFieldJson {
  name: string;
  type: string;
  default: unknown;
  description: string;
  options?: string[];
}

export interface WorkflowJson {
  name: string;
  description: string;
  github_repo: string;
  container_image: string;
  job_script: string;
  sbatch_params: Record<string, string>;
  param_schema: ParamFieldJson[];
  version: string;
}

export interface WorkflowFormJson {
  workflow: string;
  fields: ParamFieldJson[];
}

export interface RunStarted {
  run_uuid: string;
  message: string;
}

export interface RunRow {
  run_uuid: string;
  user_id: number;
  group_id: number;
  user: string;
  group: string;
  name: string;
  task: string;
  status: string;
  progress: number;
  start_time: string;
  main_task_name: string;
}

export interface RunEventJson {
  sequence: number;
  run_uuid: string;
  user_id: number;
  group_id: number;
  task_name: string;
  event_kind: string;
  payload: Record<string, string>;
  timestamp: string;
}

export interface RunDetail {
  projection: RunRow;
  events: RunEventJson[];
}

export interface TemplateJson {
  form_id: string;
  version: number;
  schema: Record<string, FormFieldSpec>;
  published_by: string;
  published_at: string;
}

export interface FormFieldSpec {
  type: string;
  required?: boolean;
  options?: string[];
  fields?: Record<string, FormFieldSpec>;
}

export interface SubmissionJson {
  submission_id: string;
  form_id: string;
  form_version: number;
  object_id: number;
  values: Record<string, unknown>;
  submitted_by: string;
  submitted_at: string;
  flattened?: [string, string][];
}

export interface AnalyzerConfigJson {
  workflows: WorkflowJson[];
  ini: string;
}

export interface OrderCreateBody {
  destination_id: number;
  destination_type: string;
  files: string[];
  preprocessing?: Record<string, unknown> | null;
}

export interface RunCreateBody {
  input_selection: { container_id: number; image_ids: number[] };
  output_options: {
    target_dataset_id: number;
    attach_zip?: boolean;
    attach_tables?: boolean;
    email_on_done?: boolean;
    rename_pattern?: string | null;
  };
  params: Record<string, unknown>;
  version?: string;
}
