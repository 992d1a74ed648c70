/** Node-side mask PNG decoding (pngjs); the browser entry point decodes with
 * canvas APIs instead. */

import { PNG } from 'pngjs';

import type { MaskBits } from './mask';
import { base64ToBytes } from './mask';

/** Decode a greyscale mask PNG: luminance >= 128 means selected. */
export function decodeMaskPng(pngB64: string): MaskBits {
  const png = PNG.sync.read(Buffer.from(base64ToBytes(pngB64)));
  const bits: boolean[] = new Array(png.width * png.height);
  for (let i = 0; i < png.width * png.height; i++) {
    bits[i] = png.data[4 * i] >= 128;
  }
  return { width: png.width, height: png.height, bits };
}
