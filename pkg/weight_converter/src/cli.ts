#!/usr/bin/env node
/**
 * Command line entry points.
 *
 *   convert   --src model.json --out-weights w.dtxw --out-descriptor net.json
 *             [--pooling avg|max]
 *   reference --src model.json --image img.ppm --layers a,b,c --out acts.dtxw
 *             [--pooling avg|max]
 *
 * `convert` prints the conversion manifest as JSON on stdout. Exit codes:
 * 0 success, 2 usage, 1 conversion failure.
 */

import { resolve } from 'path';
import { fileURLToPath } from 'url';
import { convertWeights, emitReferenceActivations } from './convert.js';

const USAGE = `usage:
  weight-converter convert --src <model.json> --out-weights <path> --out-descriptor <path> [--pooling avg|max]
  weight-converter reference --src <model.json> --image <ppm> --layers <a,b,c> --out <path> [--pooling avg|max]`;

class UsageError extends Error {}

function parseFlags(argv: string[], allowed: Set<string>): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || !allowed.has(key)) {
      throw new UsageError(`unknown flag ${key}`);
    }
    const value = argv[i + 1];
    if (value === undefined) throw new UsageError(`flag ${key} needs a value`);
    flags.set(key, value);
  }
  return flags;
}

function need(flags: Map<string, string>, key: string): string {
  const value = flags.get(key);
  if (value === undefined) throw new UsageError(`missing required flag ${key}`);
  return value;
}

function pooling(flags: Map<string, string>): 'avg' | 'max' {
  const value = flags.get('--pooling') ?? 'avg';
  if (value !== 'avg' && value !== 'max') {
    throw new UsageError(`--pooling must be avg or max, got ${value}`);
  }
  return value;
}

export function main(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === '--help' || command === '-h') {
      console.log(USAGE);
      return 0;
    }
    if (command === 'convert') {
      const flags = parseFlags(
        rest,
        new Set(['--src', '--out-weights', '--out-descriptor', '--pooling']),
      );
      const manifest = convertWeights({
        modelJsonPath: need(flags, '--src'),
        outWeights: need(flags, '--out-weights'),
        outDescriptor: need(flags, '--out-descriptor'),
        pooling: pooling(flags),
      });
      console.log(JSON.stringify(manifest, null, 2));
      return 0;
    }
    if (command === 'reference') {
      const flags = parseFlags(
        rest,
        new Set(['--src', '--image', '--layers', '--out', '--pooling']),
      );
      const layers = need(flags, '--layers')
        .split(',')
        .map((s) => s.trim())
        .filter((s) => s.length > 0);
      const out = emitReferenceActivations({
        modelJsonPath: need(flags, '--src'),
        imagePath: need(flags, '--image'),
        layers,
        out: need(flags, '--out'),
        pooling: pooling(flags),
      });
      console.log(out);
      return 0;
    }
    throw new UsageError(command ? `unknown command ${command}` : 'no command given');
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}\n${USAGE}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && resolve(process.argv[1]) === fileURLToPath(import.meta.url);
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
