// Recommendation triage: accept forwards the mined rule into the proposal
// pipeline under the learning process's name; reject raises the pattern's
// threshold, and the new threshold is displayed back.

import type { GatewayClient, Recommendation, Session } from "../api.js";
import { clear, el, verdictBanner } from "../render.js";

export interface RecommendationsPanel {
  root: HTMLElement;
  refresh(): Promise<Recommendation[]>;
  triage(recId: string, verdict: "accept" | "reject"): Promise<void>;
}

export function recommendationsPanel(
  client: GatewayClient,
  session: Session,
): RecommendationsPanel {
  const list = el("div", { class: "rec-list", "data-testid": "rec-list" });
  const outcome = el("div", { class: "rec-outcome", "data-testid": "rec-outcome" });
  const root = el("section", { class: "panel panel-recs hidden" }, [
    el("h2", {}, ["Learned rule suggestions"]),
    list,
    outcome,
  ]);
  let shown: Map<string, number> = new Map();

  function renderItem(rec: Recommendation): HTMLElement {
    const accept = el("button", { "data-testid": `rec-accept-${rec.id}` }, ["Accept"]);
    const reject = el("button", { "data-testid": `rec-reject-${rec.id}` }, ["Reject"]);
    const disabled = rec.status !== "Proposed";
    if (disabled) {
      accept.setAttribute("disabled", "disabled");
      reject.setAttribute("disabled", "disabled");
    }
    accept.addEventListener("click", () => void triage(rec.id, "accept"));
    reject.addEventListener("click", () => void triage(rec.id, "reject"));
    return el("article", { class: "recommendation", "data-rec": rec.id }, [
      el("code", {}, [rec.rule]),
      el("span", { class: "score" }, [
        ` score ${rec.score.toFixed(3)}, seen ${rec.support} times [${rec.status}]`,
      ]),
      el("div", { class: "actions" }, [accept, reject]),
    ]);
  }

  async function refresh(): Promise<Recommendation[]> {
    const result = await client.recommendations(session.ticket);
    clear(list);
    if (!result.ok) {
      root.classList.add("hidden");
      return [];
    }
    const recs = result.body.recommendations;
    shown = new Map(recs.map((r) => [r.id, r.score]));
    root.classList.toggle("hidden", recs.length === 0);
    for (const rec of recs) list.append(renderItem(rec));
    return recs;
  }

  async function triage(recId: string, verdict: "accept" | "reject"): Promise<void> {
    clear(outcome);
    const result = await client.recommendationVerdict(session.ticket, recId, verdict);
    if (!result.ok) {
      outcome.append(verdictBanner("deny", `${result.error.code}: ${result.error.detail}`));
      return;
    }
    const rec = result.body.recommendation;
    const displayed = shown.get(recId);
    if (displayed !== undefined && Math.abs(displayed - rec.score) > 1e-9) {
      outcome.append(
        verdictBanner(
          "info",
          `Note: the score moved from ${displayed.toFixed(3)} to ` +
            `${rec.score.toFixed(3)} while this was on screen.`,
        ),
      );
    }
    if (verdict === "reject") {
      outcome.append(
        verdictBanner(
          "ok",
          `Rejected. The pattern's threshold is now ${rec.threshold.toFixed(3)}; ` +
            "it returns only with stronger evidence.",
        ),
      );
    } else {
      const proposal = result.body.proposal;
      outcome.append(
        verdictBanner(
          "ok",
          `Forwarded to the rule pipeline as ${proposal ? proposal.id : "a proposal"} ` +
            `(${proposal ? proposal.status : "pending"}).`,
        ),
      );
    }
    await refresh();
  }

  return { root, refresh, triage };
}
