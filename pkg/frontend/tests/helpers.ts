/** In-memory HTTP double. The real ApiClient is pointed at FakeServer.fetch,
 * so tests exercise URL building, auth headers, and error decoding exactly
 * as the browser would; handlers reply with the service's documented JSON
 * shapes. */

import { ApiClient } from "../src/api.js";

export interface Recorded {
  method: string;
  path: string;
  pathname: string;
  query: URLSearchParams;
  headers: Record<string, string>;
  body: unknown;
}

export interface ErrorReply {
  status: number;
  error_code: string;
  message: string;
}

type Handler = (req: Recorded) => unknown;

function isErrorReply(value: unknown): value is ErrorReply {
  return (
    typeof value === "object" &&
    value !== null &&
    "status" in value &&
    "error_code" in value &&
    "message" in value
  );
}

export class FakeServer {
  readonly requests: Recorded[] = [];
  private readonly handlers: {
    method: string;
    match: (pathname: string) => boolean;
    handler: Handler;
  }[] = [];

  on(method: string, pathname: string | RegExp, handler: Handler): void {
    const match =
      typeof pathname === "string"
        ? (p: string) => p === pathname
        : (p: string) => pathname.test(p);
    this.handlers.push({ method: method.toUpperCase(), match, handler });
  }

  error(status: number, errorCode: string, message: string): ErrorReply {
    return { status, error_code: errorCode, message };
  }

  readonly fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://fairflow.test");
    const method = (init?.method ?? "GET").toUpperCase();
    const headers = { ...((init?.headers as Record<string, string>) ?? {}) };
    const body = init?.body ? (JSON.parse(String(init.body)) as unknown) : undefined;
    const recorded: Recorded = {
      method,
      path: url.pathname + url.search,
      pathname: url.pathname,
      query: url.searchParams,
      headers,
      body,
    };
    this.requests.push(recorded);
    for (const route of this.handlers) {
      if (route.method === method && route.match(url.pathname)) {
        const result = route.handler(recorded);
        if (isErrorReply(result)) {
          return new Response(
            JSON.stringify({ error_code: result.error_code, message: result.message }),
            { status: result.status, headers: { "Content-Type": "application/json" } },
          );
        }
        return new Response(JSON.stringify(result), {
          status: 200,
          headers: { "Content-Type": "application/json" },
        });
      }
    }
    return new Response(
      JSON.stringify({ error_code: "UNKNOWN_ROUTE", message: `${method} ${url.pathname}` }),
      { status: 404, headers: { "Content-Type": "application/json" } },
    );
  };

  client(token = "tok-test"): ApiClient {
    return new ApiClient(token, "", this.fetch);
  }

  sent(method: string, pathname: string): Recorded[] {
    return this.requests.filter((r) => r.method === method && r.pathname === pathname);
  }

  last(method: string, pathname: string): Recorded {
    const hits = this.sent(method, pathname);
    const tail = hits[hits.length - 1];
    if (!tail) throw new Error(`no recorded ${method} ${pathname}`);
    return tail;
  }
}

/** Let queued microtasks and zero-delay timers run. */
export async function flush(): Promise<void> {
  for (let i = 0; i < 4; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

export function mount(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}
