/**
 * Thin typed client for the decomposition service. Every byte of pixel
 * data and every edited preview comes from the server; the UI never
 * recomputes reflectance or shading on its own.
 */

export interface SessionMeta {
  id: string;
  width: number;
  height: number;
  grid: { lambda_min: number; lambda_max: number; count: number };
  wavelengths: number[];
  maps: string[];
  views: string[];
  ranges: Record<string, [number, number]>;
  report: Record<string, unknown>;
}

export interface PixelSpectrum {
  x: number;
  y: number;
  wavelengths: number[];
  observed: number[];
  reconstructed: number[];
  reflectance: number[];
  params: {
    i_d: number;
    i_s: number;
    f_mel: number;
    f_blood: number;
    status: string;
    relative_spectral_error: number;
    skin_probability: number;
  };
}

export interface JobStatus {
  job: string;
  state: string;
  error?: string | null;
  session?: string | null;
}

export class ApiError extends Error {
  readonly status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }
}

async function raiseFor(resp: Response): Promise<void> {
  if (resp.ok) return;
  let detail = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body, keep the status line
  }
  throw new ApiError(resp.status, detail);
}

export class SkinspecClient {
  readonly base: string;

  constructor(base: string) {
    this.base = base.replace(/\/+$/, "");
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    await raiseFor(resp);
    return (await resp.json()) as T;
  }

  private async bytes(path: string, init?: RequestInit): Promise<Uint8Array> {
    const resp = await fetch(this.base + path, init);
    await raiseFor(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async ping(): Promise<{ service: string; version: string }> {
    return this.json("/");
  }

  async registerSession(path: string): Promise<SessionMeta> {
    return this.json("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ path }),
    });
  }

  async meta(sid: string): Promise<SessionMeta> {
    return this.json(`/sessions/${sid}/meta`);
  }

  mapPngUrl(sid: string, name: string): string {
    return `${this.base}/sessions/${sid}/maps/${name}.png`;
  }

  renderUrl(sid: string, view: string): string {
    return `${this.base}/sessions/${sid}/render?view=${view}`;
  }

  async mapBin(sid: string, name: string): Promise<ArrayBuffer> {
    const resp = await fetch(`${this.base}/sessions/${sid}/maps/${name}.bin`);
    await raiseFor(resp);
    return resp.arrayBuffer();
  }

  async render(sid: string, view: string): Promise<Uint8Array> {
    return this.bytes(`/sessions/${sid}/render?view=${view}`);
  }

  /** POST a serialized edit script, receive the re-rendered PNG. */
  async edit(sid: string, script: string): Promise<Uint8Array> {
    return this.bytes(`/sessions/${sid}/edit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: script,
    });
  }

  async spectrum(sid: string, x: number, y: number): Promise<PixelSpectrum> {
    return this.json(`/sessions/${sid}/spectrum?x=${x}&y=${y}`);
  }

  async submitDecompose(cube: string, out: string): Promise<string> {
    const body = await this.json<{ job: string }>("/jobs/decompose", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ cube, out }),
    });
    return body.job;
  }

  async jobStatus(jobId: string): Promise<JobStatus> {
    return this.json(`/jobs/${jobId}`);
  }
}
