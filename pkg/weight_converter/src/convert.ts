/**
 * One-shot conversion of pretrained VGG-19 weights (tfjs-layers layout)
 * into the engine's artifacts: the `DTXW` weights container, the JSON
 * network descriptor, and optionally a `DTXW` container of reference
 * activations for cross-implementation parity checks.
 */

import { createHash } from 'crypto';
import { writeFileSync } from 'fs';
import type { Tensor } from './dtxw.js';
import { encodeContainer, writeContainer } from './dtxw.js';
import { collectActivations, preprocess } from './forward.js';
import { readPpm } from './ppm.js';
import { readSourceModel } from './tfjs.js';
import {
  CHANNEL_MEANS,
  CHANNEL_ORDER,
  descriptorDoc,
  kernelToOihw,
  validateSource,
} from './vgg.js';

export interface ConversionManifest {
  source: { model_json: string; shards: string[]; sha256: string };
  pooling: 'avg' | 'max';
  layers: Array<{ name: string; kernel: number[]; bias: number[] }>;
  preprocessing: { channel_means: number[]; channel_order: string };
}

export interface ConvertedModel {
  /** `<layer>.weight` / `<layer>.bias` tensors, OIHW, topology order. */
  entries: Array<[string, Tensor]>;
  manifest: ConversionManifest;
}

/** Read, validate, and reorder a source model without touching disk output. */
export function convertSource(modelJsonPath: string, pooling: 'avg' | 'max'): ConvertedModel {
  const source = readSourceModel(modelJsonPath);
  const chain = validateSource(source.tensors);
  const entries: Array<[string, Tensor]> = [];
  const layers: ConversionManifest['layers'] = [];
  for (const entry of chain) {
    const kernel = kernelToOihw(source.tensors.get(`${entry.sourceName}/kernel`)!);
    const bias = source.tensors.get(`${entry.sourceName}/bias`)!;
    entries.push([`${entry.name}.weight`, kernel]);
    entries.push([`${entry.name}.bias`, bias]);
    layers.push({ name: entry.name, kernel: kernel.dims, bias: bias.dims });
  }
  const manifest: ConversionManifest = {
    source: {
      model_json: modelJsonPath,
      shards: source.shardPaths,
      sha256: createHash('sha256').update(encodeContainer(entries)).digest('hex'),
    },
    pooling,
    layers,
    preprocessing: { channel_means: [...CHANNEL_MEANS], channel_order: CHANNEL_ORDER },
  };
  return { entries, manifest };
}

export interface ConvertOptions {
  modelJsonPath: string;
  outWeights: string;
  outDescriptor: string;
  pooling?: 'avg' | 'max';
}

/** Write the weights container and descriptor; returns the manifest. */
export function convertWeights(opts: ConvertOptions): ConversionManifest {
  const pooling = opts.pooling ?? 'avg';
  const model = convertSource(opts.modelJsonPath, pooling);
  writeContainer(opts.outWeights, model.entries);
  const doc = descriptorDoc(pooling);
  writeFileSync(opts.outDescriptor, JSON.stringify(doc, null, 2) + '\n');
  return model.manifest;
}

export interface ReferenceOptions {
  modelJsonPath: string;
  imagePath: string;
  layers: string[];
  out: string;
  pooling?: 'avg' | 'max';
}

/**
 * Run the reference forward pass on one image and store the requested
 * activations as `act.<layer>` tensors ([H, W, C], float32 on disk).
 */
export function emitReferenceActivations(opts: ReferenceOptions): string {
  const pooling = opts.pooling ?? 'avg';
  const model = convertSource(opts.modelJsonPath, pooling);
  const doc = descriptorDoc(pooling);
  const image = readPpm(opts.imagePath);
  const input = preprocess(image.pixels, image.height, image.width, doc);
  const weights = new Map(model.entries);
  const acts = collectActivations(input, doc, weights, opts.layers);
  const entries: Array<[string, Tensor]> = [];
  for (const name of opts.layers) {
    const act = acts.get(name)!;
    entries.push([
      `act.${name}`,
      { dims: [act.height, act.width, act.channels], values: Float32Array.from(act.values) },
    ]);
  }
  writeContainer(opts.out, entries);
  return opts.out;
}
