/** Acceptance gate for the selection UI, run against golden fixtures that
 * were authored by the live Python service (scripts/make_ui_fixtures.py; the
 * generator asserts the render fixture is byte-identical to rendering the
 * exported field directly). */

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it, vi } from 'vitest';

import { ApiClient } from '../src/api';
import { base64ToBytes, buildOverlay, OVERLAY_RGBA } from '../src/mask';
import { decodeMaskPng } from '../src/maskpng';
import { initialState, JobMonitor, SegmentPreviewController } from '../src/session';

const fixtures = join(__dirname, 'fixtures');
const twoRegion = JSON.parse(readFileSync(join(fixtures, 'two_region.json'), 'utf-8'));
const jobRender = JSON.parse(readFileSync(join(fixtures, 'job_render.json'), 'utf-8'));

function report(name: string, ok: boolean, detail: string): void {
  process.stdout.write(`[${ok ? 'PASS' : 'FAIL'}] ${name}: ${detail}\n`);
  expect(ok).toBe(true);
}

describe('selection UI acceptance', () => {
  it('preview overlay covers exactly the service mask on the two-region image', async () => {
    const fetchFn = vi.fn(async () =>
      new Response(JSON.stringify(twoRegion.response), {
        status: 200, headers: { 'content-type': 'application/json' },
      }));
    const controller = new SegmentPreviewController(new ApiClient('http://svc', fetchFn), decodeMaskPng);
    const state = initialState();
    state.imagePngB64 = twoRegion.request.image_png_b64;
    const { mask } = await controller.preview(state, twoRegion.request.prompt);

    const reference = decodeMaskPng(twoRegion.response.mask_png_b64);
    const overlay = buildOverlay(mask);
    let mismatches = 0;
    for (let i = 0; i < reference.bits.length; i++) {
      const alpha = overlay[4 * i + 3];
      const covered = alpha === OVERLAY_RGBA[3];
      const clear = alpha === 0;
      if (reference.bits[i] ? !covered : !clear) mismatches += 1;
    }
    report('overlay matches mask', mismatches === 0,
           `${reference.width}x${reference.height} mask, ${mismatches} mismatching pixels`);
  });

  it('orbit fetch returns bytes identical to the service render of the job field', async () => {
    const serviceBytes = base64ToBytes(jobRender.render_png_b64);
    const fetchFn = vi.fn(async (url: string) => {
      expect(url).toBe(
        `http://svc/v1/jobs/job-1/render?azimuth=${jobRender.azimuth}&elevation=${jobRender.elevation}`,
      );
      return new Response(new Uint8Array(serviceBytes).buffer, {
        status: 200, headers: { 'content-type': 'image/png' },
      });
    });
    const client = new ApiClient('http://svc', fetchFn);

    // drive the monitor to completion on the recorded final status first
    const monitor = new JobMonitor(client, 'job-1', () => {}, () => {});
    const update = monitor.ingest(jobRender.final_status);
    expect(update.status.state).toBe('done');
    expect(update.lossHistory).toHaveLength(jobRender.final_status.iteration);

    const got = await client.fetchRender('job-1', jobRender.azimuth, jobRender.elevation);
    const identical = got.length === serviceBytes.length &&
      got.every((b, i) => b === serviceBytes[i]);
    report('orbit render bytes', identical,
           `${got.length} bytes fetched, service reference ${serviceBytes.length} bytes`);
  });
});
