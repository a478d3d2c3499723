/**
 * Binary PPM (`P6`, maxval 255) reader and writer. The header is parsed
 * as whitespace-separated tokens with `#` comments running to end of
 * line; exactly one whitespace byte separates the maxval from the pixel
 * payload.
 */

import { readFileSync, writeFileSync } from 'fs';

export class PpmError extends Error {}

export interface PpmImage {
  height: number;
  width: number;
  /** Row-major [H, W, 3] RGB bytes. */
  pixels: Uint8Array;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d || byte === 0x0c;
}

export function readPpm(path: string): PpmImage {
  const data = readFileSync(path);
  let pos = 0;

  function token(what: string): string {
    while (pos < data.length) {
      if (data[pos] === 0x23) {
        while (pos < data.length && data[pos] !== 0x0a) pos++;
      } else if (isSpace(data[pos])) {
        pos++;
      } else {
        break;
      }
    }
    const start = pos;
    while (pos < data.length && !isSpace(data[pos]) && data[pos] !== 0x23) pos++;
    if (pos === start) throw new PpmError(`${path}: truncated header while reading ${what}`);
    return data.subarray(start, pos).toString('ascii');
  }

  const magic = token('magic');
  if (magic !== 'P6') {
    throw new PpmError(`${path}: unsupported format ${JSON.stringify(magic)}, expected P6`);
  }
  const width = Number(token('width'));
  const height = Number(token('height'));
  const maxval = Number(token('maxval'));
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new PpmError(`${path}: bad dimensions ${width}x${height}`);
  }
  if (maxval !== 255) {
    throw new PpmError(`${path}: unsupported maxval ${maxval}, expected 255`);
  }
  pos++; // the single whitespace byte after maxval
  const need = height * width * 3;
  if (pos + need > data.length) {
    throw new PpmError(`${path}: truncated payload (at byte offset ${pos})`);
  }
  return { height, width, pixels: Uint8Array.from(data.subarray(pos, pos + need)) };
}

export function writePpm(path: string, image: PpmImage): void {
  const need = image.height * image.width * 3;
  if (image.pixels.length !== need) {
    throw new PpmError(`pixel buffer holds ${image.pixels.length} bytes, dims need ${need}`);
  }
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, 'ascii');
  writeFileSync(path, Buffer.concat([header, Buffer.from(image.pixels)]));
}
