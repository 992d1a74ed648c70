/** Browser entry point: wires the canvas, prompt gestures, job form, loss
 * plot, and orbit controls to the controllers. Logic lives in the imported
 * modules; this file is DOM glue. */

import { ApiClient } from './api';
import { AnnotationError, canvasToImage, clickToPoint, dragToBox, promptToConfigFields } from './annotate';
import type { MaskBits } from './mask';
import { base64ToBytes, buildOverlay, bytesToBase64 } from './mask';
import { initialState, JobMonitor, SegmentPreviewController } from './session';
import type { Prompt } from './types';

/** Canvas-based mask PNG decoding (the Node test suite uses pngjs instead). */
async function decodeMaskWithCanvas(pngB64: string): Promise<MaskBits> {
  const bytes = base64ToBytes(pngB64);
  const bmp = await createImageBitmap(new Blob([new Uint8Array(bytes).buffer], { type: 'image/png' }));
  const off = new OffscreenCanvas(bmp.width, bmp.height);
  const ctx = off.getContext('2d')!;
  ctx.drawImage(bmp, 0, 0);
  const data = ctx.getImageData(0, 0, bmp.width, bmp.height).data;
  const bits: boolean[] = new Array(bmp.width * bmp.height);
  for (let i = 0; i < bits.length; i++) bits[i] = data[4 * i] >= 128;
  return { width: bmp.width, height: bmp.height, bits };
}

const state = initialState();
const api = new ApiClient(window.location.origin);
const previews = new SegmentPreviewController(api, decodeMaskWithCanvas);
let monitor: JobMonitor | null = null;

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;
const canvas = () => $<HTMLCanvasElement>('annotate-canvas');
const banner = (msg: string) => { $('error-banner').textContent = msg; };

function redraw(): void {
  const ctx = canvas().getContext('2d')!;
  const img = $<HTMLImageElement>('photo');
  ctx.clearRect(0, 0, canvas().width, canvas().height);
  ctx.drawImage(img, 0, 0, canvas().width, canvas().height);
  if (state.mask) {
    const overlay = new ImageData(buildOverlay(state.mask), state.mask.width, state.mask.height);
    createImageBitmap(overlay).then((bmp) => {
      ctx.drawImage(bmp, 0, 0, canvas().width, canvas().height);
      if (state.bbox) {
        const [x0, y0, x1, y1] = state.bbox;
        const sx = canvas().width / state.mask!.width;
        const sy = canvas().height / state.mask!.height;
        ctx.strokeStyle = '#2a7fff';
        ctx.strokeRect(x0 * sx, y0 * sy, (x1 - x0 + 1) * sx, (y1 - y0 + 1) * sy);
      }
    });
  }
}

async function firePrompt(prompt: Prompt): Promise<void> {
  banner('');
  try {
    await previews.preview(state, prompt);
    redraw();
  } catch (e) {
    if ((e as Error).name === 'AbortError') return; // superseded by a newer prompt
    banner(`segmentation failed: ${(e as Error).message}`);
  }
}

function setupAnnotation(): void {
  let dragStart: [number, number] | null = null;
  canvas().addEventListener('pointerdown', (ev) => {
    if (!state.imageSize) return;
    dragStart = canvasToImage(ev.offsetX, ev.offsetY, canvas(), state.imageSize);
  });
  canvas().addEventListener('pointerup', (ev) => {
    if (!state.imageSize || !dragStart) return;
    const [x1, y1] = canvasToImage(ev.offsetX, ev.offsetY, canvas(), state.imageSize);
    const [x0, y0] = dragStart;
    dragStart = null;
    try {
      const prompt = (x0 === x1 && y0 === y1)
        ? clickToPoint(x0, y0, state.imageSize)
        : dragToBox(x0, y0, x1, y1, state.imageSize);
      void firePrompt(prompt);
    } catch (e) {
      if (e instanceof AnnotationError) banner(e.message); // no request sent
      else throw e;
    }
  });
}

function setupUpload(): void {
  $<HTMLInputElement>('file-input').addEventListener('change', async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    state.imagePngB64 = bytesToBase64(bytes);
    state.mask = null;
    state.bbox = null;
    const img = $<HTMLImageElement>('photo');
    img.onload = () => {
      state.imageSize = { width: img.naturalWidth, height: img.naturalHeight };
      canvas().width = img.naturalWidth;
      canvas().height = img.naturalHeight;
      redraw();
    };
    img.src = URL.createObjectURL(file);
  });
}

function drawLoss(history: (number | null)[]): void {
  const c = $<HTMLCanvasElement>('loss-canvas');
  const ctx = c.getContext('2d')!;
  ctx.clearRect(0, 0, c.width, c.height);
  const vals = history.filter((v): v is number => v !== null);
  if (!vals.length) return;
  const max = Math.max(...vals);
  ctx.beginPath();
  history.forEach((v, i) => {
    if (v === null) return;
    const x = (i / Math.max(history.length - 1, 1)) * c.width;
    const y = c.height - (v / max) * c.height;
    ctx.lineTo(x, y);
  });
  ctx.strokeStyle = '#444';
  ctx.stroke();
}

async function refreshOrbit(): Promise<void> {
  if (!state.jobId) return;
  const img = $<HTMLImageElement>('orbit-view');
  img.src = `${api.renderUrl(state.jobId, state.camera.azimuth, state.camera.elevation)}&_=${Date.now()}`;
}

function setupJobForm(): void {
  $('launch-button').addEventListener('click', () => {
    if (!state.imagePngB64 || !state.prompt) {
      banner('load an image and accept a mask preview first');
      return;
    }
    if (monitor) monitor.stop();
    const config = {
      image_png_b64: state.imagePngB64,
      iters: Number($<HTMLInputElement>('iters-input').value) || 2000,
      seed: Number($<HTMLInputElement>('seed-input').value) || 0,
      ...promptToConfigFields(state.prompt),
    };
    api.createJob(config).then((id) => {
      state.jobId = id;
      $('job-state').textContent = 'queued';
      monitor = new JobMonitor(
        api, id,
        (u) => {
          $('job-state').textContent = `${u.status.state} (${u.status.iteration})`;
          drawLoss(u.lossHistory);
          if (u.status.state === 'failed') banner(u.status.error ?? 'job failed');
          if (u.status.state === 'done') void refreshOrbit();
        },
        (e) => banner(e.message),
      );
      monitor.start();
    }, (e) => banner(`job submission failed: ${e.message}`));
  });

  $('orbit-left').addEventListener('click', () => {
    state.camera.azimuth = (state.camera.azimuth + 330) % 360;
    void refreshOrbit();
  });
  $('orbit-right').addEventListener('click', () => {
    state.camera.azimuth = (state.camera.azimuth + 30) % 360;
    void refreshOrbit();
  });
}

setupUpload();
setupAnnotation();
setupJobForm();
