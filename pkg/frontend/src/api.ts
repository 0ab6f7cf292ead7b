/**
 * HTTP client for the annotation server. This is the only place the
 * workbench talks to the outside world; every state change goes through
 * POST /annotations.
 */
import type {
  AssistResult,
  NextUnit,
  ProgressDoc,
  SessionInfo,
  SubmitBody,
  SubmitResult,
  TaxonomyDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
    public retryAfter: string | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** The endpoint surface the workbench depends on (mockable in tests). */
export interface Api {
  taxonomy(): Promise<TaxonomyDoc>;
  openSession(annotatorId: string, sessionId?: string | null): Promise<SessionInfo>;
  next(sessionId: string): Promise<NextUnit>;
  submit(body: SubmitBody): Promise<SubmitResult>;
  assist(sentenceId: string, featureId: string, force?: boolean): Promise<AssistResult>;
  progress(): Promise<ProgressDoc>;
}

export class ApiClient implements Api {
  private fetchFn: FetchLike;
  private taxonomyEtag: string | null = null;
  private taxonomyCache: TaxonomyDoc | null = null;

  constructor(private baseUrl = "", fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async raise(res: Response): Promise<never> {
    let message = `${res.status} ${res.statusText}`.trim();
    try {
      const body = await res.json();
      if (body && typeof body.detail === "string") message = body.detail;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(res.status, message, res.headers.get("retry-after"));
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchFn(this.baseUrl + path, init);
    if (!res.ok) await this.raise(res);
    return res.json() as Promise<T>;
  }

  /** Conditional fetch: the taxonomy is immutable per server run, so 304 serves the cache. */
  async taxonomy(): Promise<TaxonomyDoc> {
    const init: RequestInit = this.taxonomyEtag
      ? { headers: { "if-none-match": this.taxonomyEtag } }
      : {};
    const res = await this.fetchFn(this.baseUrl + "/taxonomy", init);
    if (res.status === 304 && this.taxonomyCache !== null) return this.taxonomyCache;
    if (!res.ok) await this.raise(res);
    this.taxonomyEtag = res.headers.get("etag");
    this.taxonomyCache = (await res.json()) as TaxonomyDoc;
    return this.taxonomyCache;
  }

  async openSession(annotatorId: string, sessionId?: string | null): Promise<SessionInfo> {
    const body: Record<string, string> = { annotator_id: annotatorId };
    if (sessionId) body.session_id = sessionId;
    return this.json<SessionInfo>("POST", "/sessions", body);
  }

  next(sessionId: string): Promise<NextUnit> {
    return this.json<NextUnit>("GET", `/sessions/${encodeURIComponent(sessionId)}/next`);
  }

  submit(body: SubmitBody): Promise<SubmitResult> {
    return this.json<SubmitResult>("POST", "/annotations", body);
  }

  /** GET serves the stored exchange when one exists; force re-asks the model. */
  assist(sentenceId: string, featureId: string, force = false): Promise<AssistResult> {
    if (force) {
      return this.json<AssistResult>("POST", "/assist", {
        sentence_id: sentenceId,
        feature_id: featureId,
      });
    }
    const query = new URLSearchParams({ sentence_id: sentenceId, feature_id: featureId });
    return this.json<AssistResult>("GET", `/assist?${query}`);
  }

  progress(): Promise<ProgressDoc> {
    return this.json<ProgressDoc>("GET", "/progress");
  }
}
