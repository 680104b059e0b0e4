// Approval queue: pending and escalated proposals with their conflict
// witnesses. The panel shows itself only to sessions the queue addresses
// (the escalation target or the root administrator); verdicts still come
// from the server, which rejects resolvers it does not accept.

import type { GatewayClient, Proposal, Session } from "../api.js";
import { clear, el, verdictBanner } from "../render.js";

export interface AdminQueuePanel {
  root: HTMLElement;
  refresh(): Promise<Proposal[]>;
  resolve(proposalId: string, verdict: "accept" | "reject"): Promise<void>;
}

function minutesLabel(spans: number[][] | undefined): string {
  if (!spans || spans.length === 0) return "any time";
  return spans
    .map(([lo, hi]) => {
      const fmt = (m: number) =>
        `${String(Math.floor(m / 60)).padStart(2, "0")}:${String(m % 60).padStart(2, "0")}`;
      return `${fmt(lo)}-${fmt(hi % 1440)}`;
    })
    .join(", ");
}

export function adminQueuePanel(
  client: GatewayClient,
  session: Session,
  onResolved?: () => void,
): AdminQueuePanel {
  const list = el("div", { class: "queue-list", "data-testid": "queue-list" });
  const outcome = el("div", { class: "queue-outcome", "data-testid": "queue-outcome" });
  const root = el("section", { class: "panel panel-queue hidden" }, [
    el("h2", {}, ["Rule proposals awaiting a decision"]),
    list,
    outcome,
  ]);

  function addressedToMe(proposal: Proposal): boolean {
    if (session.role === "RuleAdministrator") return true;
    return proposal.escalated_to === session.owner_id;
  }

  function renderItem(proposal: Proposal): HTMLElement {
    const conflicts = proposal.conflicts.map((c) =>
      el("li", { class: "conflict" }, [
        `clashes with ${c.with} over ${c.variable} in ${c.rooms.join(", ")} ` +
          `(${c.reason}); both can hold ${minutesLabel(c.witness.minutes)}`,
      ]),
    );
    const accept = el("button", { "data-testid": `accept-${proposal.id}` }, ["Accept"]);
    const reject = el("button", { "data-testid": `reject-${proposal.id}` }, ["Reject"]);
    accept.addEventListener("click", () => void resolve(proposal.id, "accept"));
    reject.addEventListener("click", () => void resolve(proposal.id, "reject"));
    return el("article", { class: "proposal", "data-proposal": proposal.id }, [
      el("header", {}, [
        el("code", {}, [proposal.rule]),
        el("span", { class: "owner" }, [` from ${proposal.owner}`]),
        el("span", { class: "status" }, [` [${proposal.status}]`]),
      ]),
      el("ul", { class: "conflicts" }, conflicts),
      el("div", { class: "actions" }, [accept, reject]),
    ]);
  }

  async function refresh(): Promise<Proposal[]> {
    const result = await client.pending(session.ticket);
    clear(list);
    if (!result.ok) {
      root.classList.add("hidden");
      return [];
    }
    const mine = result.body.pending.filter(addressedToMe);
    root.classList.toggle("hidden", mine.length === 0);
    for (const proposal of mine) list.append(renderItem(proposal));
    return mine;
  }

  async function resolve(proposalId: string, verdict: "accept" | "reject"): Promise<void> {
    clear(outcome);
    const result = await client.resolve(session.ticket, proposalId, verdict);
    if (!result.ok) {
      outcome.append(verdictBanner("deny", `${result.error.code}: ${result.error.detail}`));
      return;
    }
    const note =
      result.body.status === "Accepted"
        ? `Proposal ${proposalId} accepted; the new script activates at the next tick.`
        : `Proposal ${proposalId} ${result.body.status.toLowerCase()}.`;
    outcome.append(verdictBanner("ok", note));
    await refresh();
    onResolved?.();
  }

  return { root, refresh, resolve };
}
