import { describe, expect, it } from 'vitest';

import {
  AnnotationError, canvasToImage, clickToPoint, dragToBox, promptToConfigFields,
} from '../src/annotate';

const img = { width: 100, height: 50 };

describe('canvasToImage', () => {
  it('scales display coordinates into integer pixel coordinates', () => {
    const canvas = { width: 200, height: 100 };
    expect(canvasToImage(0, 0, canvas, img)).toEqual([0, 0]);
    expect(canvasToImage(199, 99, canvas, img)).toEqual([99, 49]);
    expect(canvasToImage(100, 50, canvas, img)).toEqual([50, 25]);
  });

  it('clamps coordinates that land outside the image', () => {
    const canvas = { width: 100, height: 50 };
    expect(canvasToImage(-3, -3, canvas, img)).toEqual([0, 0]);
    expect(canvasToImage(1000, 1000, canvas, img)).toEqual([99, 49]);
  });
});

describe('clickToPoint', () => {
  it('accepts in-bounds clicks', () => {
    expect(clickToPoint(10, 20, img)).toEqual({ kind: 'point', point: [10, 20] });
  });

  it('rejects out-of-bounds points', () => {
    expect(() => clickToPoint(100, 0, img)).toThrow(AnnotationError);
    expect(() => clickToPoint(0, -1, img)).toThrow(AnnotationError);
  });
});

describe('dragToBox', () => {
  it('normalizes any corner order', () => {
    const expected = { kind: 'box', box: [5, 10, 20, 30] };
    expect(dragToBox(5, 10, 20, 30, img)).toEqual(expected);
    expect(dragToBox(20, 30, 5, 10, img)).toEqual(expected);
    expect(dragToBox(20, 10, 5, 30, img)).toEqual(expected);
    expect(dragToBox(5, 30, 20, 10, img)).toEqual(expected);
  });

  it('rejects zero-area boxes before any request is made', () => {
    expect(() => dragToBox(5, 5, 5, 30, img)).toThrow(AnnotationError);
    expect(() => dragToBox(5, 5, 30, 5, img)).toThrow(AnnotationError);
    expect(() => dragToBox(7, 7, 7, 7, img)).toThrow(AnnotationError);
  });

  it('rejects boxes crossing the image border', () => {
    expect(() => dragToBox(-1, 0, 10, 10, img)).toThrow(AnnotationError);
    expect(() => dragToBox(0, 0, 100, 10, img)).toThrow(AnnotationError);
  });
});

describe('promptToConfigFields', () => {
  it('maps prompts onto the flat job-config keys', () => {
    expect(promptToConfigFields({ kind: 'point', point: [3, 4] })).toEqual({
      prompt_kind: 'point', point_x: 3, point_y: 4,
    });
    expect(promptToConfigFields({ kind: 'box', box: [1, 2, 3, 4] })).toEqual({
      prompt_kind: 'box', box_x0: 1, box_y0: 2, box_x1: 3, box_y1: 4,
    });
  });
});
