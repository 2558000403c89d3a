/**
 * Typed client for the preference-profile service HTTP API.
 *
 * The fetch implementation is injectable so every test can mock the wire
 * exactly; nothing in here interprets or recomputes model numbers.
 */

export interface RankingEntry {
  id: string;
  score: number;
}

export interface ProfileSummary {
  profile_id: string;
  dim: number;
  event_count: number;
  drift_cosine: number;
  current: number[];
  created_at: string;
  updated_at: string;
}

export interface EventAck {
  seq: number;
  drift_cosine: number;
}

export interface CreateProfileRequest {
  base_id?: string;
  base_vector?: number[];
  profile_id?: string;
  config?: {
    epsilon?: number;
    steps?: number;
    temperature?: number;
    renormalize?: boolean;
  };
}

export interface ErrorBody {
  error_code: string;
  message: string;
  details?: unknown;
}

export class ApiError extends Error {
  readonly status: number;
  readonly errorCode: string;
  readonly details: unknown;

  constructor(status: number, body: ErrorBody) {
    super(body.message);
    this.status = status;
    this.errorCode = body.error_code;
    this.details = body.details;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let body: ErrorBody;
  try {
    body = (await response.json()) as ErrorBody;
  } catch {
    body = { error_code: "http_error", message: `HTTP ${response.status}` };
  }
  throw new ApiError(response.status, body);
}

export class ServiceClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    }).then((response) => parseOrThrow<T>(response));
  }

  async healthz(): Promise<boolean> {
    try {
      const response = await this.fetchFn(`${this.baseUrl}/healthz`);
      return response.ok;
    } catch {
      return false;
    }
  }

  createProfile(request: CreateProfileRequest): Promise<{ profile_id: string }> {
    return this.post("/profiles", request);
  }

  async getProfile(profileId: string): Promise<ProfileSummary> {
    const response = await this.fetchFn(
      `${this.baseUrl}/profiles/${encodeURIComponent(profileId)}`,
    );
    return parseOrThrow<ProfileSummary>(response);
  }

  recordEvent(profileId: string, winnerId: string, loserId: string): Promise<EventAck> {
    return this.post(`/profiles/${encodeURIComponent(profileId)}/events`, {
      winner_id: winnerId,
      loser_id: loserId,
    });
  }

  async rank(profileId: string, k: number, candidateIds?: string[]): Promise<RankingEntry[]> {
    const payload: { k: number; candidate_ids?: string[] } = { k };
    if (candidateIds !== undefined) {
      payload.candidate_ids = candidateIds;
    }
    const body = await this.post<{ ranking: RankingEntry[] }>(
      `/profiles/${encodeURIComponent(profileId)}/rank`,
      payload,
    );
    return body.ranking;
  }
}
