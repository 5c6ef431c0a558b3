/** Pluggable captioners.
 *
 * Production captioning models are one option behind the registry; the
 * built-in 'template' captioner describes an image from simple statistics
 * (luminance, dominant hue, edge density) so the pipeline runs hermetically.
 * Raw caption text is emitted untouched: all linguistic preprocessing
 * belongs to the primary toolkit.
 */

import { DecodedImage } from './types.js';

export type CaptionFn = (image: DecodedImage) => string;

const registry = new Map<string, CaptionFn>();

export function registerCaptioner(id: string, fn: CaptionFn): void {
  registry.set(id, fn);
}

export function getCaptioner(id: string): CaptionFn {
  const fn = registry.get(id);
  if (!fn) {
    throw new Error(
      `unknown captioner '${id}' (available: ${[...registry.keys()].join(', ')}); ` +
        'register custom models via registerCaptioner()',
    );
  }
  return fn;
}

function templateCaption(image: DecodedImage): string {
  const { data } = image;
  const n = data.length / 3;
  let r = 0;
  let g = 0;
  let b = 0;
  for (let i = 0; i < n; i++) {
    r += data[i * 3];
    g += data[i * 3 + 1];
    b += data[i * 3 + 2];
  }
  r /= n;
  g /= n;
  b /= n;
  const luminance = 0.299 * r + 0.587 * g + 0.114 * b;

  // horizontal gradient energy as a texture proxy
  let grad = 0;
  const w = image.width;
  for (let y = 0; y < image.height; y++) {
    for (let x = 1; x < w; x++) {
      const i = (y * w + x) * 3;
      grad += Math.abs(data[i] - data[i - 3]);
    }
  }
  grad /= n;

  const bright = luminance > 0.55 ? 'bright' : luminance > 0.3 ? 'lit' : 'dim';
  const hue =
    r > g && r > b ? 'red' : g > r && g > b ? 'green' : b > r && b > g ? 'blue' : 'gray';
  const texture = grad > 0.08 ? 'busy shelves' : grad > 0.03 ? 'patterned walls' : 'plain walls';
  return `a ${bright} room with ${hue} furniture and ${texture}.`;
}

registerCaptioner('template', templateCaption);
