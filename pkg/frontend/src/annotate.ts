/** Pointer gestures on the image canvas -> prompt annotations. */

import type { BoxPrompt, PointPrompt, Prompt } from './types';

export class AnnotationError extends Error {}

export interface ImageSize {
  width: number;
  height: number;
}

/** Canvas-space coordinates -> integer pixel coordinates in the image,
 * accounting for the canvas being displayed at a different size. */
export function canvasToImage(
  cx: number, cy: number,
  canvas: { width: number; height: number },
  image: ImageSize,
): [number, number] {
  const x = Math.floor((cx / canvas.width) * image.width);
  const y = Math.floor((cy / canvas.height) * image.height);
  return [
    Math.min(Math.max(x, 0), image.width - 1),
    Math.min(Math.max(y, 0), image.height - 1),
  ];
}

export function clickToPoint(x: number, y: number, image: ImageSize): PointPrompt {
  if (x < 0 || y < 0 || x >= image.width || y >= image.height) {
    throw new AnnotationError(`point (${x}, ${y}) outside the image`);
  }
  return { kind: 'point', point: [x, y] };
}

/** A drag from (x0, y0) to (x1, y1), any corner order. Zero-area boxes are a
 * validation error and must not produce a request. */
export function dragToBox(
  x0: number, y0: number, x1: number, y1: number, image: ImageSize,
): BoxPrompt {
  const bx0 = Math.min(x0, x1);
  const bx1 = Math.max(x0, x1);
  const by0 = Math.min(y0, y1);
  const by1 = Math.max(y0, y1);
  if (bx0 === bx1 || by0 === by1) {
    throw new AnnotationError('box has zero area; drag a larger region');
  }
  if (bx0 < 0 || by0 < 0 || bx1 >= image.width || by1 >= image.height) {
    throw new AnnotationError('box extends outside the image');
  }
  return { kind: 'box', box: [bx0, by0, bx1, by1] };
}

export type PromptConfigFields =
  | { prompt_kind: 'point'; point_x: number; point_y: number }
  | { prompt_kind: 'box'; box_x0: number; box_y0: number; box_x1: number; box_y1: number };

export function promptToConfigFields(prompt: Prompt): PromptConfigFields {
  if (prompt.kind === 'point') {
    return { prompt_kind: 'point', point_x: prompt.point[0], point_y: prompt.point[1] };
  }
  const [x0, y0, x1, y1] = prompt.box;
  return { prompt_kind: 'box', box_x0: x0, box_y0: y0, box_x1: x1, box_y1: y1 };
}
