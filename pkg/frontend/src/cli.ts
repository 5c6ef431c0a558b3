#!/usr/bin/env node
/** Adapter CLI: captions | features | finetune, each with --validate. */

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { getBackbone, loadBackbone } from './backbone.js';
import { extractCaptions, extractFeatures, finetuneLowLevel } from './extract.js';
import { readManifest } from './manifest.js';
import { DEFAULT_FINETUNE } from './types.js';
import { validateCaptionsWithPrimary, validateFeaturesWithPrimary } from './validate.js';

function requireValidation(kind: 'captions' | 'features', path: string): void {
  const outcome =
    kind === 'captions' ? validateCaptionsWithPrimary(path) : validateFeaturesWithPrimary(path);
  if (!outcome.ok) {
    throw new Error(`primary validation rejected ${path}:\n${outcome.stderr}`);
  }
  console.log(`primary validation accepted ${path}`);
}

await yargs(hideBin(process.argv))
  .scriptName('scene-robust-adapter')
  .command(
    'captions',
    'generate raw captions for every image in a manifest',
    (y) =>
      y
        .option('manifest', { type: 'string', demandOption: true })
        .option('images', { type: 'string', demandOption: true })
        .option('out', { type: 'string', demandOption: true })
        .option('captioner', { type: 'string', default: 'template' })
        .option('validate', { type: 'boolean', default: false }),
    (argv) => {
      const records = readManifest(argv.manifest);
      const result = extractCaptions(records, argv.images, argv.out, argv.captioner);
      console.log(
        `wrote ${result.written} captions to ${argv.out}` +
          (result.skipped.length ? `; skipped ${result.skipped.length} unreadable images` : ''),
      );
      if (argv.validate) requireValidation('captions', argv.out);
    },
  )
  .command(
    'features',
    'extract 128-d feature vectors into a P148FEAT file',
    (y) =>
      y
        .option('manifest', { type: 'string', demandOption: true })
        .option('images', { type: 'string', demandOption: true })
        .option('out', { type: 'string', demandOption: true })
        .option('backbone', { type: 'string', default: 'tiny-cnn' })
        .option('checkpoint', { type: 'string', describe: 'adapter backbone checkpoint' })
        .option('seed', { type: 'number', default: 0 })
        .option('validate', { type: 'boolean', default: false }),
    (argv) => {
      const records = readManifest(argv.manifest);
      const backbone = argv.checkpoint
        ? loadBackbone(argv.checkpoint, argv.seed)
        : getBackbone(argv.backbone, argv.seed);
      const count = extractFeatures(records, argv.images, argv.out, backbone);
      console.log(`wrote ${count} feature vectors to ${argv.out}`);
      if (argv.validate) requireValidation('features', argv.out);
    },
  )
  .command(
    'finetune',
    'fine-tune the backbone head on the train split, then export features',
    (y) =>
      y
        .option('manifest', { type: 'string', demandOption: true })
        .option('images', { type: 'string', demandOption: true })
        .option('out-dir', { type: 'string', demandOption: true })
        .option('backbone', { type: 'string', default: 'tiny-cnn' })
        .option('lr', { type: 'number', default: DEFAULT_FINETUNE.lr })
        .option('weight-decay', { type: 'number', default: DEFAULT_FINETUNE.weightDecay })
        .option('epochs', { type: 'number', default: DEFAULT_FINETUNE.epochs })
        .option('batch-size', { type: 'number', default: DEFAULT_FINETUNE.batchSize })
        .option('seed', { type: 'number', default: DEFAULT_FINETUNE.seed })
        .option('freeze-trunk', { type: 'boolean', default: false })
        .option('validate', { type: 'boolean', default: false }),
    (argv) => {
      const records = readManifest(argv.manifest);
      const outputs = finetuneLowLevel(
        records,
        argv.images,
        argv.outDir,
        {
          lr: argv.lr,
          weightDecay: argv.weightDecay,
          epochs: argv.epochs,
          batchSize: argv.batchSize,
          seed: argv.seed,
        },
        argv.backbone,
        argv.freezeTrunk,
      );
      const last = outputs.log.at(-1);
      console.log(
        `checkpoint: ${outputs.checkpointPath}\nfeatures: ${outputs.featuresPath}` +
          (last ? `\nfinal train top-1: ${last.top1.toFixed(3)}` : ''),
      );
      if (argv.validate) requireValidation('features', outputs.featuresPath);
    },
  )
  .demandCommand(1)
  .strict()
  .help()
  .parseAsync();
