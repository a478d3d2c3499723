/**
 * Reader for the tfjs-layers artifact layout: a `model.json` whose
 * `weightsManifest` lists weight groups, each group naming binary shard
 * files (little-endian float32, concatenated) and the tensors packed into
 * them in order.
 *
 * Only what the VGG-19 conversion needs is supported: float32 tensors,
 * shards resolved relative to the model.json directory.
 */

import { readFileSync } from 'fs';
import { dirname, join } from 'path';
import type { Tensor } from './dtxw.js';
import { elementCount } from './dtxw.js';

export class SourceFormatError extends Error {}

interface ManifestWeight {
  name: string;
  shape: number[];
  dtype: string;
}

interface ManifestGroup {
  paths: string[];
  weights: ManifestWeight[];
}

export interface SourceModel {
  /** Tensor name -> values, insertion-ordered as listed in the manifest. */
  tensors: Map<string, Tensor>;
  /** Files the model was assembled from, relative to the model.json. */
  shardPaths: string[];
}

function parseManifest(doc: unknown, path: string): ManifestGroup[] {
  if (typeof doc !== 'object' || doc === null) {
    throw new SourceFormatError(`${path}: not a JSON object`);
  }
  const manifest = (doc as Record<string, unknown>).weightsManifest;
  if (!Array.isArray(manifest) || manifest.length === 0) {
    throw new SourceFormatError(`${path}: no weightsManifest array`);
  }
  const groups: ManifestGroup[] = [];
  for (const entry of manifest) {
    const paths = entry?.paths;
    const weights = entry?.weights;
    if (!Array.isArray(paths) || !Array.isArray(weights)) {
      throw new SourceFormatError(`${path}: manifest group lacks paths/weights`);
    }
    groups.push({ paths, weights });
  }
  return groups;
}

/** Load every tensor of a tfjs-layers model given its model.json path. */
export function readSourceModel(modelJsonPath: string): SourceModel {
  let doc: unknown;
  try {
    doc = JSON.parse(readFileSync(modelJsonPath, 'utf-8'));
  } catch (err) {
    throw new SourceFormatError(`${modelJsonPath}: ${(err as Error).message}`);
  }
  const groups = parseManifest(doc, modelJsonPath);
  const dir = dirname(modelJsonPath);
  const tensors = new Map<string, Tensor>();
  const shardPaths: string[] = [];
  for (const group of groups) {
    const shards: Buffer[] = [];
    for (const rel of group.paths) {
      shardPaths.push(rel);
      try {
        shards.push(readFileSync(join(dir, rel)));
      } catch (err) {
        throw new SourceFormatError(`missing weight shard ${rel}: ${(err as Error).message}`);
      }
    }
    const blob = Buffer.concat(shards);
    let offset = 0;
    for (const spec of group.weights) {
      if (spec.dtype !== 'float32') {
        throw new SourceFormatError(`tensor ${spec.name}: unsupported dtype ${spec.dtype}`);
      }
      const n = elementCount(spec.shape);
      const end = offset + 4 * n;
      if (end > blob.length) {
        throw new SourceFormatError(
          `tensor ${spec.name}: shards end at byte ${blob.length}, need ${end}`,
        );
      }
      const values = new Float32Array(n);
      for (let i = 0; i < n; i++) values[i] = blob.readFloatLE(offset + 4 * i);
      tensors.set(spec.name, { dims: [...spec.shape], values });
      offset = end;
    }
    if (offset !== blob.length) {
      throw new SourceFormatError(
        `weight group leaves ${blob.length - offset} unclaimed bytes`,
      );
    }
  }
  return { tensors, shardPaths };
}
