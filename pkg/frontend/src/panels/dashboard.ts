// Live dashboard: rooms with measured values, presence chips, notifications.
// Display is monotone in the snapshot sequence number; a stale fetch that
// resolves late can never roll the view backwards.

import type { GatewayClient, NotificationItem, Session, StateView } from "../api.js";
import { clear, el } from "../render.js";

export interface DashboardPanel {
  root: HTMLElement;
  renderState(view: StateView): boolean;
  renderNotifications(items: NotificationItem[]): void;
  refresh(): Promise<void>;
  lastSeq(): number;
  notificationSeq(): number;
}

export function dashboardPanel(client: GatewayClient, session: Session): DashboardPanel {
  const rooms = el("div", { class: "rooms", "data-testid": "rooms" });
  const chips = el("div", { class: "chips", "data-testid": "presence-chips" });
  const clock = el("div", { class: "clock", "data-testid": "clock" });
  const feed = el("ol", { class: "notifications", "data-testid": "notifications" });
  const root = el("section", { class: "panel panel-dashboard" }, [
    el("h2", {}, ["Home"]),
    clock,
    chips,
    rooms,
    el("h3", {}, ["Notifications"]),
    feed,
  ]);

  let seq = -1;
  let feedSeq = 0;

  function renderState(view: StateView): boolean {
    if (view.seq < seq) return false; // stale snapshot: keep what we have
    seq = view.seq;
    clock.textContent =
      `${view.time.clock} · ${view.time.period} · ${view.time.dayType} · ` +
      `${view.time.season} · tick ${view.tick}`;
    clear(chips);
    for (const [resident, where] of Object.entries(view.presence)) {
      const activity = view.activity[resident];
      const label = where
        ? `${resident} @ ${where}${activity ? ` (${activity})` : ""}`
        : `${resident} away`;
      chips.append(el("span", { class: where ? "chip present" : "chip absent" }, [label]));
    }
    clear(rooms);
    for (const [room, values] of Object.entries(view.rooms)) {
      const cells = Object.entries(values).map(([quantity, value]) =>
        el("li", {}, [
          `${quantity}: ${value === null ? "unknown" : value.toFixed(1)}`,
        ]),
      );
      rooms.append(
        el("div", { class: "room-card", "data-room": room }, [
          el("h4", {}, [room]),
          el("ul", {}, cells),
        ]),
      );
    }
    return true;
  }

  function renderNotifications(items: NotificationItem[]): void {
    for (const item of items) {
      if (item.seq <= feedSeq) continue; // server sequence order is the order
      feedSeq = item.seq;
      feed.append(
        el("li", { class: `note note-${item.severity.toLowerCase()}`, "data-seq": String(item.seq) }, [
          `#${item.seq} ${item.severity} ${item.target}: ` +
            `${item.message || `rule ${item.rule}`} (tick ${item.tick})`,
        ]),
      );
    }
  }

  async function refresh(): Promise<void> {
    const [stateResult, noteResult] = await Promise.all([
      client.state(session.ticket),
      client.notifications(feedSeq),
    ]);
    if (stateResult.ok) renderState(stateResult.body);
    if (noteResult.ok) renderNotifications(noteResult.body.items);
  }

  return {
    root,
    renderState,
    renderNotifications,
    refresh,
    lastSeq: () => seq,
    notificationSeq: () => feedSeq,
  };
}
