/**
 * Typed client for the edit service.
 *
 * Every call is routed through an injectable fetch implementation and
 * recorded in `log`, so tests (and the network-traffic assertions the studio
 * makes about itself) can inspect exactly what went over the wire.
 */

export interface RequestRecord {
  method: string;
  path: string;
  body?: unknown;
  headers?: Record<string, string>;
}

export interface ResponseLike {
  status: number;
  json(): Promise<any>;
  bytes(): Promise<Uint8Array>;
}

export type FetchLike = (req: RequestRecord) => Promise<ResponseLike>;

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export interface SessionArtifacts {
  session_id: string;
  reconstruction_png: string;
  predicted_mask_png: string;
  final_loss: number;
  latent_hash: string;
}

export interface ApplyResult {
  image_png: string;
  mask_png: string;
  latent_hash: string;
  scale: number;
  refine_steps: number;
  loss_trace: number[];
}

export interface VectorEntry {
  name: string;
  label_set: number[];
  compatible: boolean | null;
}

export interface EditSubmission {
  q_labels: number[];
  buffer_px?: number;
  mode?: string;
  scale?: number;
  steps?: number;
  mask_png?: string;
  save_vector_name?: string;
}

async function expectOk(resp: ResponseLike): Promise<any> {
  const body = await resp.json();
  if (resp.status >= 400) {
    throw new ApiError(resp.status, body?.detail ?? "request failed");
  }
  return body;
}

export class ApiClient {
  readonly log: RequestRecord[] = [];

  constructor(private fetchImpl: FetchLike, readonly baseUrl: string = "") {}

  private async call(record: RequestRecord): Promise<ResponseLike> {
    this.log.push(record);
    return this.fetchImpl(record);
  }

  async health(): Promise<{ status: string }> {
    return expectOk(await this.call({ method: "GET", path: "/healthz" }));
  }

  async createSession(imagePngBase64: string, embedSteps?: number,
                      idempotencyKey?: string): Promise<SessionArtifacts> {
    const headers: Record<string, string> = {};
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    return expectOk(await this.call({
      method: "POST", path: "/sessions", headers,
      body: { image_png: imagePngBase64, embed_steps: embedSteps },
    }));
  }

  async listSessions(): Promise<string[]> {
    const body = await expectOk(await this.call({ method: "GET", path: "/sessions" }));
    return body.sessions;
  }

  async sessionInfo(sessionId: string): Promise<any> {
    return expectOk(await this.call({ method: "GET", path: `/sessions/${sessionId}` }));
  }

  async getMask(sessionId: string): Promise<Uint8Array> {
    const resp = await this.call({ method: "GET", path: `/sessions/${sessionId}/mask` });
    if (resp.status >= 400) throw new ApiError(resp.status, "mask fetch failed");
    return resp.bytes();
  }

  async putMask(sessionId: string, png: Uint8Array): Promise<void> {
    const resp = await this.call({
      method: "PUT", path: `/sessions/${sessionId}/mask`, body: png,
      headers: { "Content-Type": "image/png" },
    });
    if (resp.status >= 400) {
      const body = await resp.json();
      throw new ApiError(resp.status, body?.detail ?? "mask upload failed");
    }
  }

  async submitEdit(sessionId: string, edit: EditSubmission,
                   idempotencyKey?: string): Promise<{ job_id: string }> {
    const headers: Record<string, string> = {};
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    return expectOk(await this.call({
      method: "POST", path: `/sessions/${sessionId}/edit`, body: edit, headers,
    }));
  }

  async cancelJob(sessionId: string, jobId: string): Promise<void> {
    await expectOk(await this.call({
      method: "POST", path: `/sessions/${sessionId}/jobs/${jobId}/cancel`,
    }));
  }

  async jobStatus(sessionId: string, jobId: string): Promise<any> {
    return expectOk(await this.call({
      method: "GET", path: `/sessions/${sessionId}/jobs/${jobId}`,
    }));
  }

  jobEventsPath(sessionId: string, jobId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/jobs/${jobId}/events`;
  }

  /** Vector application; refineSteps 0 is the interactive-rate path. */
  async applyVector(sessionId: string, vector: string, scale: number,
                    refineSteps = 0): Promise<ApplyResult> {
    return expectOk(await this.call({
      method: "POST", path: `/sessions/${sessionId}/apply`,
      body: { vector, scale, refine_steps: refineSteps },
    }));
  }

  async listVectors(): Promise<VectorEntry[]> {
    const body = await expectOk(await this.call({ method: "GET", path: "/vectors" }));
    return body.entries;
  }

  async benchmark(request: unknown): Promise<any> {
    return expectOk(await this.call({ method: "POST", path: "/benchmark", body: request }));
  }
}

/** Browser adapter: RequestRecord -> fetch(). */
export function browserFetch(baseUrl: string): FetchLike {
  return async (req) => {
    const init: RequestInit = { method: req.method, headers: { ...req.headers } };
    if (req.body instanceof Uint8Array) {
      init.body = req.body as unknown as BodyInit;
    } else if (req.body !== undefined) {
      init.body = JSON.stringify(req.body);
      (init.headers as Record<string, string>)["Content-Type"] = "application/json";
    }
    const resp = await fetch(baseUrl + req.path, init);
    return {
      status: resp.status,
      json: () => resp.clone().json().catch(() => ({})),
      bytes: async () => new Uint8Array(await resp.arrayBuffer()),
    };
  };
}
