/** Thin typed client over the HTTP service. One method per route; no
 * reshaping, no caching, no retry logic: whatever the server says, the
 * views render. */

import type {
  AnalyzerConfigJson,
  AnnotationBlock,
  Mapping,
  MonitorRow,
  OrderCreateBody,
  OrderJson,
  RemoteListing,
  RepoObjectJson,
  RunCreateBody,
  RunDetail,
  RunRow,
  RunStarted,
  SessionInfo,
  SubmissionJson,
  TemplateJson,
  WorkflowFormJson,
  WorkflowJson,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorCode: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

type Query = Record<string, string | number | undefined | null>;

function withQuery(path: string, query?: Query): string {
  if (!query) return path;
  const params = new URLSearchParams();
  for (const [key, value] of Object.entries(query)) {
    if (value !== undefined && value !== null && value !== "") {
      params.set(key, String(value));
    }
  }
  const rendered = params.toString();
  return rendered ? `${path}?${rendered}` : path;
}

export class ApiClient {
  constructor(
    private token: string,
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "HTTP_ERROR";
      let message = `${response.status}`;
      try {
        const parsed = (await response.json()) as { error_code?: string; message?: string };
        if (parsed.error_code) code = parsed.error_code;
        if (parsed.message) message = parsed.message;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  openSession(token: string): Promise<SessionInfo> {
    return this.request("POST", "/api/session", { token });
  }

  createOrder(body: OrderCreateBody): Promise<OrderJson> {
    return this.request("POST", "/api/orders", body);
  }

  listOrders(query?: Query): Promise<OrderJson[]> {
    return this.request("GET", withQuery("/api/orders", query));
  }

  monitor(query?: Query): Promise<MonitorRow[]> {
    return this.request("GET", withQuery("/api/orders/monitor", query));
  }

  browseRemote(path = ""): Promise<RemoteListing> {
    return this.request("GET", withQuery("/api/remote", { path }));
  }

  listMappings(): Promise<Mapping[]> {
    return this.request("GET", "/api/admin/mappings");
  }

  addMapping(group: string, subfolder: string): Promise<Mapping> {
    return this.request("POST", "/api/admin/mappings", { group, subfolder });
  }

  removeMapping(group: string): Promise<{ removed: string }> {
    return this.request("DELETE", withQuery("/api/admin/mappings", { group }));
  }

  listTemplates(form?: string): Promise<TemplateJson[]> {
    return this.request("GET", withQuery("/api/forms/templates", { form }));
  }

  submitForm(body: {
    form_id: string;
    object_id: number;
    values: Record<string, unknown>;
    form_version?: number;
  }): Promise<SubmissionJson> {
    return this.request("POST", "/api/forms/submissions", body);
  }

  formHistory(object: number, form?: string): Promise<SubmissionJson[]> {
    return this.request("GET", withQuery("/api/forms/history", { object, form }));
  }

  listWorkflows(filter?: string): Promise<WorkflowJson[]> {
    return this.request("GET", withQuery("/api/workflows", { filter }));
  }

  workflowForm(name: string): Promise<WorkflowFormJson> {
    return this.request("GET", `/api/workflows/${encodeURIComponent(name)}/form`);
  }

  startRun(name: string, body: RunCreateBody): Promise<RunStarted> {
    return this.request("POST", `/api/workflows/${encodeURIComponent(name)}/runs`, body);
  }

  listRuns(query?: Query): Promise<RunRow[]> {
    return this.request("GET", withQuery("/api/runs", query));
  }

  getRun(runUuid: string): Promise<RunDetail> {
    return this.request("GET", `/api/runs/${encodeURIComponent(runUuid)}`);
  }

  getAnalyzerConfig(): Promise<AnalyzerConfigJson> {
    return this.request("GET", "/api/admin/analyzer-config");
  }

  putAnalyzerConfig(workflows: WorkflowJson[]): Promise<{ workflows: WorkflowJson[] }> {
    return this.request("PUT", "/api/admin/analyzer-config", { workflows });
  }

  repoChildren(parent?: number): Promise<RepoObjectJson[]> {
    return this.request("GET", withQuery("/api/repo/children", { parent }));
  }

  repoAnnotations(object: number): Promise<AnnotationBlock[]> {
    return this.request("GET", withQuery("/api/repo/annotations", { object }));
  }

  search(q: string): Promise<RepoObjectJson[]> {
    return this.request("GET", withQuery("/api/search", { q }));
  }
}
