/**
 * Reference forward pass over a descriptor document: conv (cross
 * correlation with zero padding), relu, and avg/max pooling on [H, W, C]
 * arrays, all accumulated in float64. This is the oracle side of the
 * activation parity check, so it shares no code with the engine and
 * stays loop-level simple.
 */

import type { Tensor } from './dtxw.js';
import type { DescriptorDoc } from './vgg.js';

export class ForwardError extends Error {}

export interface Activation {
  height: number;
  width: number;
  channels: number;
  /** Row-major [H, W, C] float64 values. */
  values: Float64Array;
}

/**
 * uint8 RGB pixels -> network input: reorder channels if the descriptor
 * wants BGR, subtract the per-channel means.
 */
export function preprocess(
  pixels: Uint8Array,
  height: number,
  width: number,
  doc: DescriptorDoc,
): Activation {
  const { channel_means: means, channel_order: order } = doc.preprocessing;
  const values = new Float64Array(height * width * 3);
  for (let p = 0; p < height * width; p++) {
    for (let c = 0; c < 3; c++) {
      const srcC = order === 'BGR' ? 2 - c : c;
      values[p * 3 + c] = pixels[p * 3 + srcC] - means[c];
    }
  }
  return { height, width, channels: 3, values };
}

function conv(
  x: Activation,
  kernel: Tensor,
  bias: Tensor,
  stride: number,
  padding: number,
): Activation {
  const [cout, cin, kh, kw] = kernel.dims;
  if (cin !== x.channels) {
    throw new ForwardError(`conv input has ${x.channels} channels, kernel expects ${cin}`);
  }
  const oh = Math.floor((x.height + 2 * padding - kh) / stride) + 1;
  const ow = Math.floor((x.width + 2 * padding - kw) / stride) + 1;
  const hp = x.height + 2 * padding;
  const wp = x.width + 2 * padding;
  let src = x.values;
  if (padding > 0) {
    src = new Float64Array(hp * wp * cin);
    for (let y = 0; y < x.height; y++) {
      const from = y * x.width * cin;
      const to = ((y + padding) * wp + padding) * cin;
      for (let i = 0; i < x.width * cin; i++) src[to + i] = x.values[from + i];
    }
  }
  const k = kernel.values;
  const out = new Float64Array(oh * ow * cout);
  for (let y = 0; y < oh; y++) {
    for (let xo = 0; xo < ow; xo++) {
      const outBase = (y * ow + xo) * cout;
      for (let o = 0; o < cout; o++) {
        let acc = bias.values[o];
        const kBase = o * cin * kh * kw;
        for (let ky = 0; ky < kh; ky++) {
          for (let kx = 0; kx < kw; kx++) {
            const inBase = ((y * stride + ky) * wp + (xo * stride + kx)) * cin;
            const kOff = kBase + ky * kw + kx;
            for (let i = 0; i < cin; i++) {
              acc += src[inBase + i] * k[kOff + i * kh * kw];
            }
          }
        }
        out[outBase + o] = acc;
      }
    }
  }
  return { height: oh, width: ow, channels: cout, values: out };
}

function relu(x: Activation): Activation {
  const values = new Float64Array(x.values.length);
  for (let i = 0; i < values.length; i++) values[i] = Math.max(x.values[i], 0);
  return { ...x, values };
}

function pool(x: Activation, mode: string, window: number, stride: number): Activation {
  const oh = Math.floor((x.height - window) / stride) + 1;
  const ow = Math.floor((x.width - window) / stride) + 1;
  const c = x.channels;
  const out = new Float64Array(oh * ow * c);
  for (let y = 0; y < oh; y++) {
    for (let xo = 0; xo < ow; xo++) {
      for (let ch = 0; ch < c; ch++) {
        let acc = mode === 'max' ? -Infinity : 0;
        for (let wy = 0; wy < window; wy++) {
          for (let wx = 0; wx < window; wx++) {
            const v = x.values[((y * stride + wy) * x.width + (xo * stride + wx)) * c + ch];
            acc = mode === 'max' ? Math.max(acc, v) : acc + v;
          }
        }
        out[(y * ow + xo) * c + ch] = mode === 'max' ? acc : acc / (window * window);
      }
    }
  }
  return { height: oh, width: ow, channels: c, values: out };
}

/**
 * Run the descriptor's layers over a preprocessed input and collect the
 * activations of the requested layer names. Weights are looked up as
 * `<layer>.weight` / `<layer>.bias` in OIHW layout.
 */
export function collectActivations(
  input: Activation,
  doc: DescriptorDoc,
  weights: Map<string, Tensor>,
  layerNames: string[],
): Map<string, Activation> {
  const known = new Set(doc.layers.map((l) => l.name));
  for (const name of layerNames) {
    if (!known.has(name)) throw new ForwardError(`unknown layer ${name}`);
  }
  const wanted = new Set(layerNames);
  const collected = new Map<string, Activation>();
  let cur = input;
  let remaining = wanted.size;
  for (const layer of doc.layers) {
    if (remaining === 0) break;
    if (layer.kind === 'conv') {
      const kernel = weights.get(`${layer.name}.weight`);
      const bias = weights.get(`${layer.name}.bias`);
      if (!kernel || !bias) throw new ForwardError(`no weights for layer ${layer.name}`);
      cur = conv(cur, kernel, bias, layer.stride, layer.zero_padding);
    } else if (layer.kind === 'relu') {
      cur = relu(cur);
    } else {
      cur = pool(cur, layer.mode, layer.window, layer.stride);
    }
    if (wanted.has(layer.name)) {
      collected.set(layer.name, cur);
      remaining--;
    }
  }
  return collected;
}
