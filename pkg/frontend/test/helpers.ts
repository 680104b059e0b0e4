// A scriptable fetch stub: register handlers per (method, path prefix).

import { vi } from "vitest";
import type { Session } from "../src/api.js";

export type Handler = (body: unknown, url: string) => { status: number; body: unknown };

export class FetchStub {
  private handlers: Array<{ method: string; path: string; handler: Handler }> = [];
  calls: Array<{ method: string; url: string; body: unknown }> = [];

  on(method: string, path: string, handler: Handler): this {
    this.handlers.push({ method: method.toUpperCase(), path, handler });
    return this;
  }

  install(): void {
    vi.stubGlobal("fetch", async (input: RequestInfo | URL, init?: RequestInit) => {
      const url = String(input);
      const method = (init?.method ?? "GET").toUpperCase();
      const body = init?.body ? JSON.parse(String(init.body)) : undefined;
      this.calls.push({ method, url, body });
      for (const entry of this.handlers) {
        if (entry.method === method && url.includes(entry.path)) {
          const result = entry.handler(body, url);
          return new Response(JSON.stringify(result.body), {
            status: result.status,
            headers: { "content-type": "application/json" },
          });
        }
      }
      return new Response(JSON.stringify({ error: { code: "NoStub", detail: url } }), {
        status: 500,
      });
    });
  }
}

export function residentSession(): Session {
  return {
    ticket: "{\"subject\":\"joe\"}",
    subject: "joe",
    role: "Resident",
    owner_id: "joe",
    grants: [
      { state: "Temperature", actions: ["read"], value: "All" },
      { state: "Temperature", actions: ["set"], value: "ABOVE 5" },
      { state: "Lights", actions: ["read", "set"], value: "Any" },
    ],
    expires: 3600,
  };
}

export function adminSession(): Session {
  return {
    ticket: "{\"subject\":\"owner\"}",
    subject: "owner",
    role: "Owner",
    owner_id: "homeowner",
    grants: [{ state: "Temperature", actions: ["read", "set"], value: "Any" }],
    expires: 3600,
  };
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
