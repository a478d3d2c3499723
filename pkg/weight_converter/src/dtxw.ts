/**
 * Binary tensor container (`DTXW`) writer and reader.
 *
 * Layout, all little-endian:
 *
 *     magic   4 bytes  "DTXW"
 *     version u32      currently 1
 *     count   u32      number of tensors
 *     per tensor:
 *         name_len u16, name UTF-8, rank u8, rank x u32 dims,
 *         prod(dims) float32 values, row-major
 *
 * Entry order is preserved, so writing the same tensors twice yields
 * byte-identical files.
 */

import { readFileSync, writeFileSync } from 'fs';

export const MAGIC = 'DTXW';
export const VERSION = 1;
const MAX_NAME_LEN = 0xffff;

export interface Tensor {
  /** Row-major dimensions; every entry >= 1. */
  dims: number[];
  /** prod(dims) float32 values, row-major. */
  values: Float32Array;
}

export class ContainerError extends Error {}

export function elementCount(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

function checkDims(name: string, dims: number[]): void {
  if (dims.length === 0 || dims.length > 255) {
    throw new ContainerError(`tensor ${name}: rank ${dims.length} out of range`);
  }
  for (const d of dims) {
    if (!Number.isInteger(d) || d < 1 || d > 0xffffffff) {
      throw new ContainerError(`tensor ${name}: bad dimension ${d}`);
    }
  }
}

/** Serialize tensors in the given order; returns the complete file image. */
export function encodeContainer(entries: Array<[string, Tensor]>): Buffer {
  const parts: Buffer[] = [];
  const head = Buffer.alloc(12);
  head.write(MAGIC, 0, 'ascii');
  head.writeUInt32LE(VERSION, 4);
  head.writeUInt32LE(entries.length, 8);
  parts.push(head);
  for (const [name, tensor] of entries) {
    checkDims(name, tensor.dims);
    const encoded = Buffer.from(name, 'utf-8');
    if (encoded.length > MAX_NAME_LEN) {
      throw new ContainerError(`tensor name too long: ${name.slice(0, 32)}...`);
    }
    const n = elementCount(tensor.dims);
    if (tensor.values.length !== n) {
      throw new ContainerError(
        `tensor ${name}: ${tensor.values.length} values for dims [${tensor.dims}]`,
      );
    }
    const meta = Buffer.alloc(2 + encoded.length + 1 + 4 * tensor.dims.length);
    let pos = 0;
    meta.writeUInt16LE(encoded.length, pos);
    pos += 2;
    encoded.copy(meta, pos);
    pos += encoded.length;
    meta.writeUInt8(tensor.dims.length, pos);
    pos += 1;
    for (const d of tensor.dims) {
      meta.writeUInt32LE(d, pos);
      pos += 4;
    }
    parts.push(meta);
    const payload = Buffer.alloc(4 * n);
    for (let i = 0; i < n; i++) payload.writeFloatLE(tensor.values[i], 4 * i);
    parts.push(payload);
  }
  return Buffer.concat(parts);
}

export function writeContainer(path: string, entries: Array<[string, Tensor]>): void {
  writeFileSync(path, encodeContainer(entries));
}

class Reader {
  pos = 0;
  constructor(
    private data: Buffer,
    private path: string,
  ) {}

  take(n: number, what: string): Buffer {
    if (this.pos + n > this.data.length) {
      throw new ContainerError(
        `${this.path}: truncated while reading ${what} (at byte offset ${this.pos})`,
      );
    }
    const chunk = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return chunk;
  }

  get remaining(): number {
    return this.data.length - this.pos;
  }
}

/** Read a container back as an insertion-ordered name -> tensor map. */
export function readContainer(path: string): Map<string, Tensor> {
  const data = readFileSync(path);
  const rd = new Reader(data, path);
  const magic = rd.take(4, 'magic').toString('ascii');
  if (magic !== MAGIC) {
    throw new ContainerError(`${path}: bad magic ${JSON.stringify(magic)}, expected ${MAGIC}`);
  }
  const version = rd.take(4, 'version').readUInt32LE(0);
  if (version !== VERSION) {
    throw new ContainerError(`${path}: unsupported version ${version}`);
  }
  const count = rd.take(4, 'tensor count').readUInt32LE(0);
  const out = new Map<string, Tensor>();
  for (let t = 0; t < count; t++) {
    const nameLen = rd.take(2, 'name length').readUInt16LE(0);
    const name = rd.take(nameLen, 'name').toString('utf-8');
    const rank = rd.take(1, 'rank').readUInt8(0);
    const dims: number[] = [];
    for (let i = 0; i < rank; i++) {
      dims.push(rd.take(4, `dims of ${name}`).readUInt32LE(0));
    }
    checkDims(name, dims);
    const n = elementCount(dims);
    const payload = rd.take(4 * n, `payload of ${name}`);
    const values = new Float32Array(n);
    for (let i = 0; i < n; i++) values[i] = payload.readFloatLE(4 * i);
    out.set(name, { dims, values });
  }
  if (rd.remaining !== 0) {
    throw new ContainerError(`${path}: ${rd.remaining} trailing bytes after last tensor`);
  }
  return out;
}
