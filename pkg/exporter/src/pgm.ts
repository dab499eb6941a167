/** Binary PGM (P5, 8-bit) reader/writer; pixels normalize to [0, 1] on load. */

import * as fs from 'fs';
import { FileFormatError } from './errors.js';

export interface GrayImage {
  height: number;
  width: number;
  /** Row-major pixels in [0, 1]. */
  pixels: Float32Array;
}

export function readPgm(path: string): GrayImage {
  const blob = fs.readFileSync(path);
  const tokens: string[] = [];
  let pos = 0;
  while (tokens.length < 4) {
    // skip whitespace and # comments
    while (pos < blob.length) {
      const ch = blob[pos];
      if (ch === 0x23) {
        while (pos < blob.length && blob[pos] !== 0x0a) pos++;
      } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
        pos++;
      } else {
        break;
      }
    }
    const start = pos;
    while (pos < blob.length && !isWhitespace(blob[pos])) pos++;
    if (pos === start) {
      throw new FileFormatError(`${path}: truncated PGM header`);
    }
    tokens.push(blob.toString('ascii', start, pos));
  }
  if (tokens[0] !== 'P5') {
    throw new FileFormatError(`${path}: expected binary PGM magic P5, got ${tokens[0]}`);
  }
  const width = Number(tokens[1]);
  const height = Number(tokens[2]);
  const maxval = Number(tokens[3]);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new FileFormatError(`${path}: bad dimensions ${width}x${height}`);
  }
  if (!Number.isInteger(maxval) || maxval < 1 || maxval > 255) {
    throw new FileFormatError(`${path}: only 8-bit PGM supported, maxval=${maxval}`);
  }
  pos += 1; // single whitespace after maxval
  const expected = width * height;
  if (blob.length - pos !== expected) {
    throw new FileFormatError(
      `${path}: expected ${expected} pixel bytes, found ${blob.length - pos}`,
    );
  }
  const pixels = new Float32Array(expected);
  for (let i = 0; i < expected; i++) {
    pixels[i] = blob[pos + i] / maxval;
  }
  return { height, width, pixels };
}

export function writePgm(image: GrayImage, path: string): void {
  const { height, width, pixels } = image;
  if (pixels.length !== height * width) {
    throw new FileFormatError(`pixel count ${pixels.length} != ${height}*${width}`);
  }
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, 'ascii');
  const payload = Buffer.alloc(pixels.length);
  for (let i = 0; i < pixels.length; i++) {
    const v = pixels[i];
    if (!(v >= 0 && v <= 1)) {
      throw new FileFormatError(`pixel ${i} out of [0, 1]: ${v}`);
    }
    payload[i] = Math.floor(v * 255 + 0.5);
  }
  fs.writeFileSync(path, Buffer.concat([header, payload]));
}

function isWhitespace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}
