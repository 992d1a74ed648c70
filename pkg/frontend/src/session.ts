/** Session state and the two long-lived controllers: segment preview (at most
 * one in-flight request, newer prompts cancel older ones) and job monitoring
 * (1 s polling with a loss trace reconstructed from the tail). */

import { ApiClient } from './api';
import type { MaskBits } from './mask';
import type { JobStatus, OrbitCamera, Prompt } from './types';

/** Platform-specific mask PNG decoder: pngjs in Node, canvas in the browser. */
export type MaskDecoder = (pngB64: string) => MaskBits | Promise<MaskBits>;

export interface SessionState {
  imagePngB64: string | null;
  imageSize: { width: number; height: number } | null;
  prompt: Prompt | null;
  mask: MaskBits | null;
  bbox: [number, number, number, number] | null;
  jobId: string | null;
  camera: OrbitCamera;
}

export function initialState(): SessionState {
  return {
    imagePngB64: null,
    imageSize: null,
    prompt: null,
    mask: null,
    bbox: null,
    jobId: null,
    camera: { azimuth: 0, elevation: 20 },
  };
}

export interface PreviewResult {
  mask: MaskBits;
  bbox: [number, number, number, number];
}

/** Serializes segment previews: firing a new prompt aborts the in-flight
 * request, so responses can never arrive out of order. On failure the prompt
 * is kept so the user can retry. */
export class SegmentPreviewController {
  private inflight: AbortController | null = null;

  constructor(private api: ApiClient, private decode: MaskDecoder) {}

  async preview(state: SessionState, prompt: Prompt): Promise<PreviewResult> {
    if (!state.imagePngB64) throw new Error('no image loaded');
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    state.prompt = prompt;
    try {
      const resp = await this.api.segment(state.imagePngB64, prompt, controller.signal);
      const mask = await this.decode(resp.mask_png_b64);
      state.mask = mask;
      state.bbox = resp.bbox;
      return { mask, bbox: resp.bbox };
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }
}

export interface MonitorUpdate {
  status: JobStatus;
  /** one entry per reported iteration; null where the tail had already
   * scrolled past an iteration between polls */
  lossHistory: (number | null)[];
}

/** Polls a job until it reaches a terminal state. The service reports only a
 * tail of recent proxy losses; the monitor stitches consecutive tails into a
 * history whose length always equals the reported iteration count. */
export class JobMonitor {
  private timer: ReturnType<typeof setInterval> | null = null;
  lossHistory: (number | null)[] = [];

  constructor(
    private api: ApiClient,
    private jobId: string,
    private onUpdate: (u: MonitorUpdate) => void,
    private onError: (e: Error) => void,
    private intervalMs = 1000,
  ) {}

  ingest(status: JobStatus): MonitorUpdate {
    const known = this.lossHistory.length;
    const missing = status.iteration - known;
    if (missing > 0) {
      const tail = status.proxy_loss_tail;
      const fromTail = Math.min(missing, tail.length);
      for (let i = 0; i < missing - fromTail; i++) this.lossHistory.push(null);
      for (let i = tail.length - fromTail; i < tail.length; i++) {
        this.lossHistory.push(tail[i]);
      }
    }
    return { status, lossHistory: this.lossHistory };
  }

  start(): void {
    if (this.timer) return;
    this.timer = setInterval(() => void this.poll(), this.intervalMs);
  }

  stop(): void {
    if (this.timer) clearInterval(this.timer);
    this.timer = null;
  }

  async poll(): Promise<void> {
    let status: JobStatus;
    try {
      status = await this.api.getJob(this.jobId);
    } catch (e) {
      this.stop();
      this.onError(e instanceof Error ? e : new Error(String(e)));
      return;
    }
    const update = this.ingest(status);
    if (status.state === 'done' || status.state === 'failed') this.stop();
    this.onUpdate(update);
  }
}
