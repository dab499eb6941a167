/**
 * FVEC binary matrix format (the toolkit's normative interchange):
 *
 *   bytes 0..3   magic "FVEC"
 *   bytes 4..7   version, uint32 little-endian (currently 1)
 *   bytes 8..11  rows,    uint32 little-endian
 *   bytes 12..15 cols,    uint32 little-endian
 *   bytes 16..   rows*cols IEEE-754 float32, little-endian, row-major
 */

import * as fs from 'fs';
import { FileFormatError } from './errors.js';

export const FVEC_MAGIC = 'FVEC';
export const FVEC_VERSION = 1;
const HEADER_BYTES = 16;

export interface FvecMatrix {
  rows: number;
  cols: number;
  /** Row-major values, length rows*cols. */
  data: Float32Array;
}

export function writeFvec(matrix: FvecMatrix, path: string): void {
  const { rows, cols, data } = matrix;
  if (!Number.isInteger(rows) || rows < 0 || !Number.isInteger(cols) || cols < 1) {
    throw new FileFormatError(`bad matrix dims ${rows}x${cols}`);
  }
  if (data.length !== rows * cols) {
    throw new FileFormatError(`payload length ${data.length} != ${rows}*${cols}`);
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new FileFormatError(`non-finite value at index ${i}`);
    }
  }
  const buffer = Buffer.alloc(HEADER_BYTES + rows * cols * 4);
  buffer.write(FVEC_MAGIC, 0, 'ascii');
  buffer.writeUInt32LE(FVEC_VERSION, 4);
  buffer.writeUInt32LE(rows, 8);
  buffer.writeUInt32LE(cols, 12);
  for (let i = 0; i < data.length; i++) {
    buffer.writeFloatLE(data[i], HEADER_BYTES + i * 4);
  }
  fs.writeFileSync(path, buffer);
}

export function readFvec(path: string): FvecMatrix {
  const blob = fs.readFileSync(path);
  if (blob.length < HEADER_BYTES) {
    throw new FileFormatError(`${path}: shorter than the 16-byte header`);
  }
  if (blob.toString('ascii', 0, 4) !== FVEC_MAGIC) {
    throw new FileFormatError(`${path}: bad magic`);
  }
  const version = blob.readUInt32LE(4);
  if (version !== FVEC_VERSION) {
    throw new FileFormatError(`${path}: unsupported version ${version}`);
  }
  const rows = blob.readUInt32LE(8);
  const cols = blob.readUInt32LE(12);
  const expected = rows * cols * 4;
  if (blob.length - HEADER_BYTES !== expected) {
    throw new FileFormatError(
      `${path}: expected ${expected} payload bytes, found ${blob.length - HEADER_BYTES}`,
    );
  }
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = blob.readFloatLE(HEADER_BYTES + i * 4);
    if (!Number.isFinite(data[i])) {
      throw new FileFormatError(`${path}: non-finite value at index ${i}`);
    }
  }
  return { rows, cols, data };
}
