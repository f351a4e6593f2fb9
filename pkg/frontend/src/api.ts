/**
 * Client for the holder wallet endpoints.
 *
 * The UI holds no keys: presentations are constructed and signed inside the
 * holder's wallet process. This client only reads the pending-request queue
 * and submits approve/deny decisions.
 */

export interface PredicateSpec {
  key: string;
  op: string;
  bound: number;
}

export interface PendingRequest {
  request_id: string;
  credential_id: string;
  requested_keys: string[];
  requested_predicates?: PredicateSpec[];
  /** keys the holder's disclosure policy permits revealing */
  permitted_keys: string[];
  nonce: string;
  verifier_name?: string;
  verifier_did?: string;
  job_summary?: string;
  /** unix seconds after which the request's nonce is stale */
  expires_at?: number;
}

export interface RevealedClaim {
  key: string;
  value: string | number;
  salt: string;
}

export interface ApproveResponse {
  ok: boolean;
  denied?: boolean;
  presentation?: { revealed: RevealedClaim[] } & Record<string, unknown>;
}

export class OfflineError extends Error {
  constructor(cause: unknown) {
    super(`holder service unreachable: ${cause}`);
    this.name = "OfflineError";
  }
}

export class HolderApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`holder service rejected the call (${status}): ${detail}`);
    this.name = "HolderApiError";
  }
}

export class HolderClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async call(path: string, body?: unknown): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method: body === undefined ? "GET" : "POST",
        headers: { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new OfflineError(err);
    }
    const text = await response.text();
    if (!response.ok) {
      throw new HolderApiError(response.status, text);
    }
    return JSON.parse(text);
  }

  async pendingRequests(): Promise<PendingRequest[]> {
    const payload = (await this.call("/v1/wallet/requests")) as { requests: PendingRequest[] };
    return payload.requests;
  }

  async approve(requestId: string, claims: string[]): Promise<ApproveResponse> {
    return (await this.call("/v1/wallet/approve", {
      request_id: requestId,
      approve: true,
      claims,
    })) as ApproveResponse;
  }

  async deny(requestId: string): Promise<ApproveResponse> {
    return (await this.call("/v1/wallet/approve", {
      request_id: requestId,
      approve: false,
    })) as ApproveResponse;
  }

  async credentials(): Promise<unknown[]> {
    const payload = (await this.call("/v1/wallet/credentials")) as { credentials: unknown[] };
    return payload.credentials;
  }
}
