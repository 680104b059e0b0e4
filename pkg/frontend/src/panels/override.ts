// Manual state override: pick a room, a state, a target, submit.
// The flow is authorize -> override; whatever the server answers is what
// renders, including the constraint that caused a denial.

import type { GatewayClient, Session } from "../api.js";
import { capabilitiesOf, constraintFor } from "../session.js";
import { clear, el, verdictBanner } from "../render.js";

export interface OverridePanel {
  root: HTMLElement;
  submit(room: string, state: string, value: number | string): Promise<void>;
}

export function overridePanel(
  client: GatewayClient,
  session: Session,
  rooms: string[],
  onApplied?: () => void,
): OverridePanel {
  const caps = capabilitiesOf(session);
  const roomSelect = el("select", { class: "override-room", "data-testid": "override-room" });
  for (const room of rooms) roomSelect.append(el("option", { value: room }, [room]));
  const stateSelect = el("select", { class: "override-state", "data-testid": "override-state" });
  for (const state of caps.settableStates) {
    stateSelect.append(el("option", { value: state }, [state]));
  }
  const valueInput = el("input", {
    class: "override-value",
    "data-testid": "override-value",
    placeholder: "target value",
  });
  const submitButton = el("button", { "data-testid": "override-submit" }, ["Apply"]);
  const outcome = el("div", { class: "override-outcome", "data-testid": "override-outcome" });

  const root = el("section", { class: "panel panel-override" }, [
    el("h2", {}, ["Set a home state"]),
    el("div", { class: "row" }, [roomSelect, stateSelect, valueInput, submitButton]),
    outcome,
  ]);

  if (caps.settableStates.length === 0) {
    root.classList.add("hidden"); // no Set grant anywhere: nothing to offer
  }

  async function submit(room: string, state: string, value: number | string): Promise<void> {
    clear(outcome);
    const authorized = await client.authorize(session.ticket, state, "set");
    if (!authorized.ok) {
      outcome.append(verdictBanner("deny", describeError(authorized.error, state)));
      return;
    }
    const directive =
      typeof value === "number"
        ? { kind: "keep" as const, lo: value, hi: value }
        : { kind: "set" as const, value };
    const result = await client.override(authorized.body.ticket, state, room, directive);
    if (!result.ok) {
      outcome.append(verdictBanner("deny", describeError(result.error, state)));
      return;
    }
    outcome.append(
      verdictBanner(
        "ok",
        `Accepted at tick ${result.body.tick}; held for ${result.body.hold_ticks} ticks.`,
      ),
    );
    onApplied?.();
  }

  function describeError(error: { code: string; detail: string; constraint?: string },
                         state: string): string {
    const constraint = error.constraint ?? constraintFor(session, state);
    if (error.code === "AclDenied" || error.code === "ValueDenied") {
      return constraint
        ? `Denied: the grant for ${state} allows ${constraint}.`
        : `Denied: ${error.detail}`;
    }
    if (error.code === "TicketInvalid" || error.code === "BadCredentials") {
      return `Session problem (${error.code}): please sign in again.`;
    }
    return `${error.code}: ${error.detail}`;
  }

  submitButton.addEventListener("click", () => {
    const raw = (valueInput as HTMLInputElement).value.trim();
    const numeric = Number(raw);
    void submit(
      (roomSelect as HTMLSelectElement).value,
      (stateSelect as HTMLSelectElement).value,
      Number.isFinite(numeric) && raw !== "" ? numeric : raw,
    );
  });

  return { root, submit };
}
