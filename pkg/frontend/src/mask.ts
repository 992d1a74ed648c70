/** Mask representation and the 50%-opacity preview overlay. PNG decoding
 * lives in maskpng.ts (Node) and main.ts (browser) so this module stays free
 * of platform dependencies. */

export interface MaskBits {
  width: number;
  height: number;
  /** row-major booleans, length width * height */
  bits: boolean[];
}

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof Buffer !== 'undefined') return Uint8Array.from(Buffer.from(b64, 'base64'));
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function bytesToBase64(bytes: Uint8Array): string {
  if (typeof Buffer !== 'undefined') return Buffer.from(bytes).toString('base64');
  let bin = '';
  for (const b of bytes) bin += String.fromCharCode(b);
  return btoa(bin);
}

export const OVERLAY_RGBA: [number, number, number, number] = [255, 64, 64, 128];

/** RGBA overlay buffer: the overlay color at 50% opacity exactly on mask
 * pixels, fully transparent elsewhere. Drawn over the photo on the canvas. */
export function buildOverlay(mask: MaskBits): Uint8ClampedArray<ArrayBuffer> {
  const data = new Uint8ClampedArray(4 * mask.width * mask.height);
  for (let i = 0; i < mask.bits.length; i++) {
    if (mask.bits[i]) {
      data.set(OVERLAY_RGBA, 4 * i);
    }
  }
  return data;
}

/** Tight bounding box of the mask, or null when it is empty. */
export function maskBbox(mask: MaskBits): [number, number, number, number] | null {
  let x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (let y = 0; y < mask.height; y++) {
    for (let x = 0; x < mask.width; x++) {
      if (mask.bits[y * mask.width + x]) {
        if (x < x0) x0 = x;
        if (x > x1) x1 = x;
        if (y < y0) y0 = y;
        if (y > y1) y1 = y;
      }
    }
  }
  return x1 < 0 ? null : [x0, y0, x1, y1];
}
