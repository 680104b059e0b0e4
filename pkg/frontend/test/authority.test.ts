// The console performs no authorization logic of its own: flip the server's
// verdict for the identical request and the rendered outcome flips with it.

import { afterEach, describe, expect, it, vi } from "vitest";

import { GatewayClient } from "../src/api.js";
import { overridePanel } from "../src/panels/override.js";
import { dashboardPanel } from "../src/panels/dashboard.js";
import { FetchStub, residentSession } from "./helpers.js";

afterEach(() => vi.unstubAllGlobals());

async function submitWithServerVerdict(allow: boolean): Promise<string> {
  const stub = new FetchStub()
    .on("POST", "/authorize", () => ({ status: 200, body: { ticket: "claim" } }))
    .on("POST", "/override", () =>
      allow
        ? { status: 200, body: { status: "accepted", tick: 1, hold_ticks: 60 } }
        : {
            status: 403,
            body: { error: { code: "AclDenied", detail: "no", constraint: "ABOVE 5" } },
          });
  stub.install();
  const panel = overridePanel(new GatewayClient(), residentSession(), ["BedRoom"]);
  // a value the table would normally deny; only the stubbed server decides
  await panel.submit("BedRoom", "Temperature", 3);
  return panel.root.querySelector('[data-testid="override-outcome"]')!.textContent!;
}

describe("server authority", () => {
  it("the same action renders whatever the server decided", async () => {
    const denied = await submitWithServerVerdict(false);
    vi.unstubAllGlobals();
    const allowed = await submitWithServerVerdict(true);
    expect(denied).toContain("ABOVE 5");
    expect(allowed).toContain("Accepted");
  });
});

describe("monotone display", () => {
  const view = (seq: number, temp: number) => ({
    tick: seq,
    seq,
    presence: { Joe: "BedRoom" as string | null },
    activity: { Joe: null as string | null },
    time: { clock: "07:00", period: "Morning", dayType: "weekday", season: "Summer" },
    rooms: { BedRoom: { Temperature: temp } },
    status: {
      tick: seq, script_hash: "x", pending_proposals: 0,
      devices: {}, last_swap_tick: null,
    },
  });

  it("a late stale snapshot never rolls the view back", () => {
    new FetchStub().install();
    const panel = dashboardPanel(new GatewayClient(), residentSession());
    expect(panel.renderState(view(5, 22.5))).toBe(true);
    expect(panel.renderState(view(3, 30.0))).toBe(false);
    expect(panel.lastSeq()).toBe(5);
    expect(panel.root.textContent).toContain("22.5");
    expect(panel.root.textContent).not.toContain("30.0");
  });

  it("notification feed follows server sequence numbers exactly", () => {
    new FetchStub().install();
    const panel = dashboardPanel(new GatewayClient(), residentSession());
    const item = (seq: number) => ({
      seq, tick: seq, target: "Joe", severity: "WARN", message: "", rule: "r1",
    });
    panel.renderNotifications([item(1), item(2)]);
    panel.renderNotifications([item(2), item(3)]); // overlap deduplicates
    const seqs = [...panel.root.querySelectorAll(".note")].map((n) =>
      n.getAttribute("data-seq"));
    expect(seqs).toEqual(["1", "2", "3"]);
    expect(panel.notificationSeq()).toBe(3);
  });
});
