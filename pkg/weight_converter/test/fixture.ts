/**
 * Test fixtures: a synthetic model in the tfjs-layers layout with the
 * VGG-19 topology and seeded random weights, plus seeded random PPM
 * images. The build environment has no route to a model zoo, so the
 * conversion tests exercise the real layout and shapes with synthetic
 * values.
 */

import { mkdirSync, writeFileSync } from 'fs';
import { join } from 'path';
import { writePpm, type PpmImage } from '../src/ppm.js';
import { convChain } from '../src/vgg.js';

/** Deterministic PRNG (mulberry32), uniform in [0, 1). */
export function rng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface FixtureOptions {
  /** Source layer names (block{b}_conv{j}) to leave out of the manifest. */
  dropLayers?: string[];
  /** Override the kernel tensor for one source layer. */
  kernelOverride?: { layer: string; values: Float32Array };
  /** How many shard files to split the weight blob into. */
  shards?: number;
}

/** Write model.json plus weight shards; returns the model.json path. */
export function buildVggFixture(dir: string, seed = 7, opts: FixtureOptions = {}): string {
  mkdirSync(dir, { recursive: true });
  const drop = new Set(opts.dropLayers ?? []);
  const next = rng(seed);
  const manifest: Array<{ name: string; shape: number[]; dtype: string }> = [];
  const buffers: Buffer[] = [];
  for (const entry of convChain()) {
    if (drop.has(entry.sourceName)) continue;
    const kShape = [3, 3, entry.inChannels, entry.outChannels];
    const kCount = 9 * entry.inChannels * entry.outChannels;
    // He-style uniform keeps activations on the input's scale through relu.
    const bound = Math.sqrt(3) * Math.sqrt(2 / (9 * entry.inChannels));
    let kernel = new Float32Array(kCount);
    for (let i = 0; i < kCount; i++) kernel[i] = (2 * next() - 1) * bound;
    if (opts.kernelOverride && opts.kernelOverride.layer === entry.sourceName) {
      kernel = opts.kernelOverride.values;
    }
    const bias = new Float32Array(entry.outChannels);
    for (let i = 0; i < bias.length; i++) bias[i] = (2 * next() - 1) * 0.05;
    manifest.push({ name: `${entry.sourceName}/kernel`, shape: kShape, dtype: 'float32' });
    buffers.push(Buffer.from(kernel.buffer, kernel.byteOffset, kernel.byteLength));
    manifest.push({ name: `${entry.sourceName}/bias`, shape: [entry.outChannels], dtype: 'float32' });
    buffers.push(Buffer.from(bias.buffer, bias.byteOffset, bias.byteLength));
  }
  const blob = Buffer.concat(buffers);
  const nShards = opts.shards ?? 2;
  const per = Math.ceil(blob.length / nShards);
  const paths: string[] = [];
  for (let s = 0; s < nShards; s++) {
    const name = `group1-shard${s + 1}of${nShards}.bin`;
    writeFileSync(join(dir, name), blob.subarray(s * per, Math.min((s + 1) * per, blob.length)));
    paths.push(name);
  }
  const modelJson = {
    format: 'layers-model',
    generatedBy: 'fixture',
    modelTopology: { class_name: 'Model', config: { name: 'vgg19' } },
    weightsManifest: [{ paths, weights: manifest }],
  };
  const modelPath = join(dir, 'model.json');
  writeFileSync(modelPath, JSON.stringify(modelJson));
  return modelPath;
}

/** Seeded random RGB image. */
export function randomImage(height: number, width: number, seed: number): PpmImage {
  const next = rng(seed);
  const pixels = new Uint8Array(height * width * 3);
  for (let i = 0; i < pixels.length; i++) pixels[i] = Math.floor(next() * 256);
  return { height, width, pixels };
}

export function writeRandomImage(path: string, height: number, width: number, seed: number): void {
  writePpm(path, randomImage(height, width, seed));
}
