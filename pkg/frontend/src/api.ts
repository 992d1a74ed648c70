/** Typed client for the pipeline-service HTTP API. Only these endpoints are
 * ever called; every engine mutation goes through them. */

import type { JobConfig, JobStatus, Prompt, SegmentResponse } from './types';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function errorMessage(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (typeof body?.error === 'string') return body.error;
  } catch {
    /* non-JSON error body */
  }
  return `HTTP ${resp.status}`;
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
  }

  private async postJson(path: string, body: unknown, signal?: AbortSignal) {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
      signal,
    });
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return resp.json();
  }

  async segment(imagePngB64: string, prompt: Prompt, signal?: AbortSignal): Promise<SegmentResponse> {
    return this.postJson('/v1/segment', { image_png_b64: imagePngB64, prompt }, signal);
  }

  async createJob(config: JobConfig): Promise<string> {
    const body = await this.postJson('/v1/jobs', config);
    if (typeof body?.id !== 'string') throw new ApiError(500, 'job response missing id');
    return body.id;
  }

  async getJob(id: string): Promise<JobStatus> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/jobs/${id}`);
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return resp.json();
  }

  renderUrl(id: string, azimuth: number, elevation: number): string {
    return `${this.baseUrl}/v1/jobs/${id}/render?azimuth=${azimuth}&elevation=${elevation}`;
  }

  /** Raw PNG bytes of a novel view of the job's current field. */
  async fetchRender(id: string, azimuth: number, elevation: number): Promise<Uint8Array> {
    const resp = await this.fetchFn(this.renderUrl(id, azimuth, elevation));
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return new Uint8Array(await resp.arrayBuffer());
  }
}
