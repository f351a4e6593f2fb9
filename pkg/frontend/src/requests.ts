/**
 * View-model for the pending-request list.
 *
 * Pure functions: the DOM layer renders whatever these return. Two
 * invariants live here and are unit-tested directly:
 *   - a toggle for a claim outside the policy-permitted set can never be
 *     enabled (the service re-validates; this is defense in depth);
 *   - the approve payload is always a subset of the displayed permitted set.
 */

import type { PendingRequest } from "./api.js";

export interface ClaimToggle {
  key: string;
  /** policy allows revealing this claim; false renders a disabled toggle */
  permitted: boolean;
  selected: boolean;
}

export function buildToggles(request: PendingRequest): ClaimToggle[] {
  const permitted = new Set(request.permitted_keys);
  return request.requested_keys.map((key) => ({
    key,
    permitted: permitted.has(key),
    selected: permitted.has(key), // pre-set from policy
  }));
}

export function toggleClaim(toggles: ClaimToggle[], key: string): ClaimToggle[] {
  return toggles.map((toggle) => {
    if (toggle.key !== key) {
      return toggle;
    }
    if (!toggle.permitted) {
      return toggle; // forbidden claims cannot be enabled, ever
    }
    return { ...toggle, selected: !toggle.selected };
  });
}

export function approvalClaims(toggles: ClaimToggle[]): string[] {
  return toggles.filter((t) => t.selected && t.permitted).map((t) => t.key);
}

export function approvalPayload(
  request: PendingRequest,
  toggles: ClaimToggle[],
): { request_id: string; approve: true; claims: string[] } {
  return { request_id: request.request_id, approve: true, claims: approvalClaims(toggles) };
}

/** Seconds until the request's nonce goes stale; null when open-ended. */
export function freshnessSeconds(request: PendingRequest, nowMs: number): number | null {
  if (request.expires_at === undefined) {
    return null;
  }
  return Math.max(0, request.expires_at - Math.floor(nowMs / 1000));
}

export function describeVerifier(request: PendingRequest): string {
  const name = request.verifier_name ?? "unknown verifier";
  return request.verifier_did ? `${name} (${request.verifier_did})` : name;
}

/** Guards approve/deny against double submission per request id. */
export class SubmitGuard {
  private inFlight = new Set<string>();

  begin(requestId: string): boolean {
    if (this.inFlight.has(requestId)) {
      return false;
    }
    this.inFlight.add(requestId);
    return true;
  }

  end(requestId: string): void {
    this.inFlight.delete(requestId);
  }
}
