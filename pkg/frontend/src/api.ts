// Typed client for the gateway API. Every call returns the server's verdict
// verbatim; the console never decides authorization outcomes on its own.

export interface Grant {
  state: string;
  actions: string[];
  value: string;
}

export interface Session {
  ticket: string;
  subject: string;
  role: string | null;
  owner_id: string;
  grants: Grant[];
  expires: number;
}

export interface ApiError {
  code: string;
  detail: string;
  constraint?: string;
  [key: string]: unknown;
}

export type ApiResult<T> =
  | { ok: true; body: T }
  | { ok: false; status: number; error: ApiError };

export interface Directive {
  kind: "set" | "keep";
  value?: string;
  lo?: number;
  hi?: number;
}

export interface StateView {
  tick: number;
  seq: number;
  presence: Record<string, string | null>;
  activity: Record<string, string | null>;
  time: { clock: string; period: string; dayType: string; season: string };
  rooms: Record<string, Record<string, number | null>>;
  status: {
    tick: number;
    script_hash: string;
    pending_proposals: number;
    devices: Record<string, string>;
    last_swap_tick: number | null;
  };
}

export interface ConflictView {
  with: string;
  variable: string;
  rooms: string[];
  reason: string;
  witness: { minutes?: number[][]; [key: string]: unknown };
}

export interface Proposal {
  id: string;
  rule: string;
  owner: string;
  status: string;
  reason: string | null;
  escalated_to: string | null;
  conflicts: ConflictView[];
}

export interface Recommendation {
  id: string;
  rule: string;
  score: number;
  support: number;
  threshold: number;
  status: string;
  pattern: string[][];
  effect: string[];
}

export interface NotificationItem {
  seq: number;
  tick: number;
  target: string;
  severity: string;
  message: string;
  rule: string;
}

async function call<T>(input: string, init?: RequestInit): Promise<ApiResult<T>> {
  let response: Response;
  try {
    response = await fetch(input, init);
  } catch (err) {
    return {
      ok: false,
      status: 0,
      error: { code: "NetworkError", detail: String(err) },
    };
  }
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const error: ApiError = body?.error ?? {
      code: `HTTP${response.status}`,
      detail: response.statusText,
    };
    return { ok: false, status: response.status, error };
  }
  return { ok: true, body: body as T };
}

function post<T>(path: string, payload: unknown): Promise<ApiResult<T>> {
  return call<T>(path, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(payload),
  });
}

function get<T>(path: string, ticket?: string): Promise<ApiResult<T>> {
  const headers: Record<string, string> = {};
  if (ticket) headers["x-ticket"] = ticket;
  return call<T>(path, { headers });
}

export class GatewayClient {
  constructor(private base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  login(user: string, secret: string): Promise<ApiResult<Session>> {
    return post(this.url("/auth/login"), { user, secret });
  }

  authorize(
    ticket: string,
    state: string,
    action: "read" | "set",
    value?: number | string | [number, number],
  ): Promise<ApiResult<{ ticket: string }>> {
    return post(this.url("/authorize"), { ticket, state, action, value });
  }

  override(
    claimTicket: string,
    state: string,
    room: string | null,
    directive: Directive,
  ): Promise<ApiResult<{ status: string; tick: number; hold_ticks: number }>> {
    return post(this.url("/override"), {
      ticket: claimTicket,
      state,
      room,
      directive,
    });
  }

  state(ticket: string): Promise<ApiResult<StateView>> {
    return get(this.url("/state"), ticket);
  }

  devices(ticket: string): Promise<ApiResult<{ devices: Record<string, unknown> }>> {
    return get(this.url("/devices"), ticket);
  }

  pending(ticket: string): Promise<ApiResult<{ pending: Proposal[] }>> {
    return get(this.url("/rules/pending"), ticket);
  }

  resolve(
    ticket: string,
    proposalId: string,
    verdict: "accept" | "reject",
  ): Promise<ApiResult<Proposal>> {
    return post(this.url(`/rules/${proposalId}/resolve`), { ticket, verdict });
  }

  recommendations(
    ticket: string,
  ): Promise<ApiResult<{ recommendations: Recommendation[] }>> {
    return get(this.url("/recommendations"), ticket);
  }

  recommendationVerdict(
    ticket: string,
    recId: string,
    verdict: "accept" | "reject",
  ): Promise<ApiResult<{ recommendation: Recommendation; proposal?: Proposal }>> {
    return post(this.url(`/recommendations/${recId}/verdict`), { ticket, verdict });
  }

  notifications(since: number): Promise<ApiResult<{ items: NotificationItem[]; seq: number }>> {
    return call(this.url(`/notifications?since=${since}`));
  }
}
