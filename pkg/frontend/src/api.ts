// Thin client for the restoration service HTTP API. The UI holds no model
// logic: every restored pixel comes back through these calls.

export type Task = "inpaint" | "sr" | "colorize";

export interface RestoreRequest {
  task: Task;
  imagePng: Uint8Array;
  maskPng?: Uint8Array;
  prompt?: string;
  beta: number;
  srFactor?: number;
  seed?: number;
}

export interface RestoreMetadata {
  model_step: number;
  checkpoint_hash: string;
  timing_ms: number;
  condition_source: "image" | "text" | "interpolated";
  beta: number;
}

export interface RestoreResult {
  imagePng: Uint8Array;
  metadata: RestoreMetadata;
}

export interface SweepFrame {
  beta: number;
  conditionSource: string;
  timingMs: number;
  imagePng: Uint8Array;
}

export interface ModelInfo {
  generator_spec: { task: Task; image_size: number; [key: string]: unknown };
  provider_spec: { name: string; embedding_dim: number };
  checkpoint_hash: string;
  step: number;
}

export class ApiError extends Error {
  constructor(public status: number, public reason: string) {
    super(`service returned ${status}: ${reason}`);
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let reason = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") reason = body.detail;
  } catch {
    // non-JSON error body, keep the status text
  }
  throw new ApiError(resp.status, reason);
}

function restoreForm(req: RestoreRequest): FormData {
  const form = new FormData();
  form.append("image", new Blob([req.imagePng as BlobPart], { type: "image/png" }), "image.png");
  if (req.maskPng) {
    form.append("mask", new Blob([req.maskPng as BlobPart], { type: "image/png" }), "mask.png");
  }
  form.append("task", req.task);
  form.append("beta", String(req.beta));
  if (req.prompt !== undefined) form.append("prompt", req.prompt);
  if (req.srFactor !== undefined) form.append("sr_factor", String(req.srFactor));
  if (req.seed !== undefined) form.append("seed", String(req.seed));
  return form;
}

function base64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export class RestoreClient {
  constructor(private baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  async health(): Promise<{ alive: boolean; model_loaded: boolean }> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/health`);
    await raiseForStatus(resp);
    return resp.json();
  }

  async modelInfo(): Promise<ModelInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/model`);
    await raiseForStatus(resp);
    return resp.json();
  }

  async restore(req: RestoreRequest): Promise<RestoreResult> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/restore`, {
      method: "POST",
      body: restoreForm(req),
    });
    await raiseForStatus(resp);
    const metaHeader = resp.headers.get("X-Restore-Metadata");
    if (!metaHeader) throw new Error("service response missing restore metadata header");
    return {
      imagePng: new Uint8Array(await resp.arrayBuffer()),
      metadata: JSON.parse(metaHeader) as RestoreMetadata,
    };
  }

  /** Run a beta sweep; frames come back in the requested order. */
  async sweep(req: RestoreRequest, betas: number[]): Promise<SweepFrame[]> {
    const form = restoreForm(req);
    form.delete("beta");
    form.append("betas", JSON.stringify(betas));
    const resp = await this.fetchFn(`${this.baseUrl}/api/sweep`, {
      method: "POST",
      body: form,
    });
    await raiseForStatus(resp);
    const body = await resp.json();
    return (body.results as any[]).map((frame) => ({
      beta: frame.beta,
      conditionSource: frame.condition_source,
      timingMs: frame.timing_ms,
      imagePng: base64ToBytes(frame.png_base64),
    }));
  }
}
