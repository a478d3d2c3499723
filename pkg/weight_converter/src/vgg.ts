/**
 * VGG-19 topology table: the 16-conv chain (blocks of 2, 2, 4, 4, 4
 * convolutions with 3x3 kernels, stride 1, zero padding 1, and 2x2
 * stride-2 pooling between blocks), the source-name mapping
 * `block{b}_conv{j}` -> `conv{b}_{j}`, and the network-descriptor
 * document the engine loads.
 *
 * Preprocessing constants follow the weights' training convention:
 * BGR channel order, per-channel means [103.939, 116.779, 123.68].
 */

import type { Tensor } from './dtxw.js';

export const CHANNEL_MEANS = [103.939, 116.779, 123.68] as const;
export const CHANNEL_ORDER = 'BGR';
export const DESCRIPTOR_VERSION = 1;

/** (block, convs in block, out channels) */
const BLOCKS: Array<[number, number, number]> = [
  [1, 2, 64],
  [2, 2, 128],
  [3, 4, 256],
  [4, 4, 512],
  [5, 4, 512],
];

export interface ConvEntry {
  /** Name in the emitted descriptor and container, e.g. conv3_2. */
  name: string;
  /** Name in the source model, e.g. block3_conv2. */
  sourceName: string;
  inChannels: number;
  outChannels: number;
}

/** The 16 conv layers in topology order. */
export function convChain(): ConvEntry[] {
  const chain: ConvEntry[] = [];
  let inCh = 3;
  for (const [block, nConvs, outCh] of BLOCKS) {
    for (let j = 1; j <= nConvs; j++) {
      chain.push({
        name: `conv${block}_${j}`,
        sourceName: `block${block}_conv${j}`,
        inChannels: inCh,
        outChannels: outCh,
      });
      inCh = outCh;
    }
  }
  return chain;
}

export class MissingLayerError extends Error {}
export class LayerShapeError extends Error {}

/**
 * Check that the source holds every conv layer with the declared shapes
 * (kernels HWIO [3, 3, in, out], biases [out]) and return the chain.
 * Raises on the first absent layer so truncated sources are named exactly.
 */
export function validateSource(tensors: Map<string, Tensor>): ConvEntry[] {
  const chain = convChain();
  for (const entry of chain) {
    const kernel = tensors.get(`${entry.sourceName}/kernel`);
    const bias = tensors.get(`${entry.sourceName}/bias`);
    if (!kernel || !bias) {
      throw new MissingLayerError(`source is missing layer ${entry.sourceName}`);
    }
    const want = [3, 3, entry.inChannels, entry.outChannels];
    if (kernel.dims.length !== 4 || kernel.dims.some((d, i) => d !== want[i])) {
      throw new LayerShapeError(
        `${entry.sourceName}/kernel has shape [${kernel.dims}], expected [${want}]`,
      );
    }
    if (bias.dims.length !== 1 || bias.dims[0] !== entry.outChannels) {
      throw new LayerShapeError(
        `${entry.sourceName}/bias has shape [${bias.dims}], expected [${entry.outChannels}]`,
      );
    }
  }
  return chain;
}

/** HWIO [kh, kw, in, out] -> OIHW [out, in, kh, kw], row-major both ways. */
export function kernelToOihw(kernel: Tensor): Tensor {
  const [kh, kw, cin, cout] = kernel.dims;
  const src = kernel.values;
  const out = new Float32Array(cout * cin * kh * kw);
  for (let o = 0; o < cout; o++) {
    for (let i = 0; i < cin; i++) {
      for (let y = 0; y < kh; y++) {
        for (let x = 0; x < kw; x++) {
          out[((o * cin + i) * kh + y) * kw + x] = src[((y * kw + x) * cin + i) * cout + o];
        }
      }
    }
  }
  return { dims: [cout, cin, kh, kw], values: out };
}

type DescriptorLayer =
  | {
      name: string;
      kind: 'conv';
      out_channels: number;
      in_channels: number;
      kernel_h: number;
      kernel_w: number;
      stride: number;
      zero_padding: number;
    }
  | { name: string; kind: 'relu' }
  | { name: string; kind: 'pool'; mode: string; window: number; stride: number };

export interface DescriptorDoc {
  format_version: number;
  input_channels: number;
  preprocessing: { channel_means: number[]; channel_order: string };
  layers: DescriptorLayer[];
}

/** The descriptor document for the full conv stack (no pool after block 5). */
export function descriptorDoc(pooling: 'avg' | 'max'): DescriptorDoc {
  const layers: DescriptorLayer[] = [];
  let inCh = 3;
  for (const [block, nConvs, outCh] of BLOCKS) {
    for (let j = 1; j <= nConvs; j++) {
      layers.push({
        name: `conv${block}_${j}`,
        kind: 'conv',
        out_channels: outCh,
        in_channels: inCh,
        kernel_h: 3,
        kernel_w: 3,
        stride: 1,
        zero_padding: 1,
      });
      layers.push({ name: `relu${block}_${j}`, kind: 'relu' });
      inCh = outCh;
    }
    if (block < 5) {
      layers.push({ name: `pool${block}`, kind: 'pool', mode: pooling, window: 2, stride: 2 });
    }
  }
  return {
    format_version: DESCRIPTOR_VERSION,
    input_channels: 3,
    preprocessing: { channel_means: [...CHANNEL_MEANS], channel_order: CHANNEL_ORDER },
    layers,
  };
}
