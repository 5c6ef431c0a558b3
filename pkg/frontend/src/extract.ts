/** Orchestration: manifests in, caption JSONL and P148FEAT files out. */

import { appendFileSync, existsSync, unlinkSync } from 'fs';
import { join } from 'path';

import { getBackbone, Backbone, extractBatch, finetune, saveBackbone } from './backbone.js';
import { getCaptioner } from './captioner.js';
import { writeCaptions, writeFeatures } from './formats.js';
import { loadPng } from './png.js';
import { CaptionRecord, DecodedImage, FinetuneHyper, ManifestRecord } from './types.js';

const BATCH = 32;

export interface ExtractCaptionsResult {
  written: number;
  skipped: string[];
}

/** One caption per readable image; unreadable ones are listed in a sidecar
 * errors file and skipped, never silently dropped. */
export function extractCaptions(
  records: ManifestRecord[],
  imageRoot: string,
  outPath: string,
  captionerId = 'template',
): ExtractCaptionsResult {
  const caption = getCaptioner(captionerId);
  const out: CaptionRecord[] = [];
  const skipped: string[] = [];
  const sidecar = `${outPath}.errors.jsonl`;
  if (existsSync(sidecar)) unlinkSync(sidecar);
  for (const record of records) {
    let image: DecodedImage;
    try {
      image = loadPng(join(imageRoot, record.relativePath));
    } catch (err) {
      skipped.push(record.imageId);
      appendFileSync(
        sidecar,
        JSON.stringify({ image_id: record.imageId, error: String(err) }) + '\n',
      );
      continue;
    }
    out.push({ imageId: record.imageId, caption: caption(image), labelId: record.labelId });
  }
  writeCaptions(out, outPath);
  return { written: out.length, skipped };
}

function loadImages(records: ManifestRecord[], imageRoot: string): DecodedImage[] {
  return records.map((record) => loadPng(join(imageRoot, record.relativePath)));
}

/** 128-d vector per manifest record; dimension mismatches abort before any
 * bytes are written. */
export function extractFeatures(
  records: ManifestRecord[],
  imageRoot: string,
  outPath: string,
  backbone: Backbone,
): number {
  const vectors = new Map<string, Float32Array>();
  for (let start = 0; start < records.length; start += BATCH) {
    const chunk = records.slice(start, start + BATCH);
    const features = extractBatch(backbone, loadImages(chunk, imageRoot));
    chunk.forEach((record, i) => vectors.set(record.imageId, features[i]));
  }
  writeFeatures(vectors, outPath);
  return vectors.size;
}

export interface FinetuneOutputs {
  checkpointPath: string;
  featuresPath: string;
  log: { epoch: number; loss: number; top1: number }[];
}

/** Train the modified-head backbone on the labeled train split, then export
 * post-training features for every manifest record. */
export function finetuneLowLevel(
  records: ManifestRecord[],
  imageRoot: string,
  outDir: string,
  hyper: FinetuneHyper,
  backboneId = 'tiny-cnn',
  freezeTrunk = false,
): FinetuneOutputs {
  const train = records.filter((r) => r.split === 'train');
  if (train.length === 0) {
    throw new Error('no train-split records to fine-tune on');
  }
  const backbone = getBackbone(backboneId, hyper.seed);
  const result = finetune(
    backbone,
    loadImages(train, imageRoot),
    train.map((r) => r.labelId),
    hyper,
    freezeTrunk,
  );
  const checkpointPath = join(outDir, `${backboneId}_finetuned.json`);
  saveBackbone(result.backbone, checkpointPath);
  const featuresPath = join(outDir, 'features.p148feat');
  extractFeatures(records, imageRoot, featuresPath, result.backbone);
  return { checkpointPath, featuresPath, log: result.log };
}
