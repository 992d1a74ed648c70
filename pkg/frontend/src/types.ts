/** Wire-protocol types shared with the pipeline service. */

export type PointPrompt = { kind: 'point'; point: [number, number] };
export type BoxPrompt = { kind: 'box'; box: [number, number, number, number] };
export type Prompt = PointPrompt | BoxPrompt;

export interface SegmentResponse {
  mask_png_b64: string;
  bbox: [number, number, number, number];
}

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export interface JobStatus {
  state: JobState;
  iteration: number;
  proxy_loss_tail: number[];
  error?: string;
}

/** Flat job config mirroring the service's TOML keys; the UI submits the
 * image inline. */
export interface JobConfig {
  image_png_b64: string;
  prompt_kind: 'point' | 'box';
  point_x?: number;
  point_y?: number;
  box_x0?: number;
  box_y0?: number;
  box_x1?: number;
  box_y1?: number;
  backend?: string;
  oracle_grid?: string;
  remote_url?: string;
  iters?: number;
  seed?: number;
  [key: string]: string | number | boolean | undefined;
}

export interface OrbitCamera {
  azimuth: number;   // degrees
  elevation: number; // degrees
}
