// Session state and the capability view derived from the server's grants.
// Panels render from capabilities; the server still has the final word.

import type { Grant, Session } from "./api.js";

export interface Capabilities {
  settableStates: string[];
  readableStates: string[];
}

export function capabilitiesOf(session: Session): Capabilities {
  const settable = new Set<string>();
  const readable = new Set<string>();
  for (const grant of session.grants) {
    if (grant.value.toLowerCase() === "none") continue; // grants nothing
    if (grant.actions.includes("set")) settable.add(grant.state);
    if (grant.actions.includes("read")) readable.add(grant.state);
  }
  return {
    settableStates: [...settable].sort(),
    readableStates: [...readable].sort(),
  };
}

export function constraintFor(session: Session, state: string): string | null {
  for (const grant of session.grants) {
    if (grant.state === state && grant.actions.includes("set")) {
      return grant.value;
    }
  }
  return null;
}

export function grantSummary(grant: Grant): string {
  return `${grant.state}: ${grant.actions.join("+")} (${grant.value})`;
}
