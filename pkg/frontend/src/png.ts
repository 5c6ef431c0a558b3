/** PNG decode and bilinear resize, without native bindings. */

import { readFileSync } from 'fs';
import { PNG } from 'pngjs';

import { DecodedImage } from './types.js';

export function loadPng(path: string): DecodedImage {
  const png = PNG.sync.read(readFileSync(path));
  const { width, height } = png;
  const out = new Float32Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    out[i * 3] = png.data[i * 4] / 255;
    out[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    out[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return { width, height, data: out };
}

/** Area-aligned bilinear resize matching the primary's resampling grid. */
export function resizeBilinear(image: DecodedImage, outH: number, outW: number): DecodedImage {
  const { width: w, height: h, data } = image;
  const out = new Float32Array(outH * outW * 3);
  for (let y = 0; y < outH; y++) {
    const sy = (y + 0.5) * (h / outH) - 0.5;
    const y0 = Math.min(Math.max(Math.floor(sy), 0), h - 1);
    const y1 = Math.min(y0 + 1, h - 1);
    const wy = Math.min(Math.max(sy - y0, 0), 1);
    for (let x = 0; x < outW; x++) {
      const sx = (x + 0.5) * (w / outW) - 0.5;
      const x0 = Math.min(Math.max(Math.floor(sx), 0), w - 1);
      const x1 = Math.min(x0 + 1, w - 1);
      const wx = Math.min(Math.max(sx - x0, 0), 1);
      for (let c = 0; c < 3; c++) {
        const a = data[(y0 * w + x0) * 3 + c];
        const b = data[(y0 * w + x1) * 3 + c];
        const d = data[(y1 * w + x0) * 3 + c];
        const e = data[(y1 * w + x1) * 3 + c];
        out[(y * outW + x) * 3 + c] =
          a * (1 - wy) * (1 - wx) + b * (1 - wy) * wx + d * wy * (1 - wx) + e * wy * wx;
      }
    }
  }
  return { width: outW, height: outH, data: out };
}
