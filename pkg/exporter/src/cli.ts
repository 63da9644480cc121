#!/usr/bin/env node
/**
 * Command line entry: export checkpoint weights or captured activations
 * into an FFPB bundle.
 *
 *     ffpb-export weights     --model ckpt.json --manifest man.json --out w.ffpb
 *     ffpb-export activations --model ckpt.json --manifest man.json --out a.ffpb
 *
 * Exit codes: 0 success, 1 usage error, 2 data error.
 */

import { writeFileSync } from 'node:fs';
import { parseArgs } from 'node:util';

import { ExporterError } from './errors.js';
import { bundleBytes, exportActivations, exportWeights } from './export.js';
import { loadManifest } from './manifest.js';
import { loadCheckpoint } from './model.js';

const USAGE =
  'usage: ffpb-export <weights|activations> --model PATH --manifest PATH --out PATH';

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        model: { type: 'string' },
        manifest: { type: 'string' },
        out: { type: 'string' },
      },
    });
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n${USAGE}\n`);
    return 1;
  }
  const [command] = parsed.positionals;
  const { model, manifest, out } = parsed.values;
  if ((command !== 'weights' && command !== 'activations') || !model || !manifest || !out) {
    process.stderr.write(`${USAGE}\n`);
    return 1;
  }
  try {
    const ckpt = loadCheckpoint(model);
    const man = loadManifest(manifest);
    const bundle = command === 'weights'
      ? exportWeights(ckpt, man)
      : exportActivations(ckpt, man);
    writeFileSync(out, bundleBytes(bundle));
  } catch (err) {
    if (err instanceof ExporterError || (err as NodeJS.ErrnoException).code === 'ENOENT'
        || err instanceof SyntaxError) {
      process.stderr.write(`error: ${(err as Error).message}\n`);
      return 2;
    }
    throw err;
  }
  return 0;
}

const entry = process.argv[1] ?? '';
if (entry.endsWith('cli.js') || entry.endsWith('cli.ts')) {
  process.exit(main(process.argv.slice(2)));
}
