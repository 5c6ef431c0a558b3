/** End-to-end adapter checks against the primary toolkit.
 *
 * The mini-places fixture tree is generated by shelling the primary package
 * (its public fixtures API is the boundary), then the adapter's exports are
 * validated by the primary's own parsers: captions via the `mine`
 * subcommand, features via `ingest_features`, and the round trip via the
 * committed crosscheck referee script.
 */

import { spawnSync } from 'child_process';
import { existsSync, mkdirSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { extractBatch, getBackbone } from '../src/backbone.js';
import { readFeatures } from '../src/formats.js';
import { extractCaptions, extractFeatures, finetuneLowLevel } from '../src/extract.js';
import { readManifest } from '../src/manifest.js';
import { loadPng } from '../src/png.js';
import { ManifestRecord } from '../src/types.js';
import { validateCaptionsWithPrimary, validateFeaturesWithPrimary } from '../src/validate.js';

let scratch: string;
let imageRoot: string;
let records: ManifestRecord[];

function python(code: string, ...args: string[]) {
  const result = spawnSync('python3', ['-c', code, ...args], { encoding: 'utf-8' });
  if (result.status !== 0) {
    throw new Error(`python helper failed: ${result.stderr}`);
  }
  return result.stdout;
}

beforeAll(() => {
  scratch = mkdtempSync(join(tmpdir(), 'adapter-e2e-'));
  imageRoot = join(scratch, 'mini');
  python(
    [
      'import sys',
      'from scene_robust.fixtures import make_mini_places, assign_splits_per_class',
      'from scene_robust.dataset import build_manifest, write_manifest',
      'root = sys.argv[1]',
      'class_map = make_mini_places(root, seed=0, per_class=12)',
      'manifest = assign_splits_per_class(build_manifest(root, class_map), 8, 2, 2)',
      'write_manifest(manifest, root + "/manifest.jsonl")',
    ].join('\n'),
    imageRoot,
  );
  records = readManifest(join(imageRoot, 'manifest.jsonl'));
});

afterAll(() => rmSync(scratch, { recursive: true, force: true }));

describe('caption extraction', () => {
  it('writes one record per readable image and passes primary validation', () => {
    const out = join(scratch, 'captions.jsonl');
    const result = extractCaptions(records, imageRoot, out);
    expect(result.written).toBe(records.length);
    expect(result.skipped).toHaveLength(0);

    const outcome = validateCaptionsWithPrimary(out);
    expect(outcome.ok, outcome.stderr).toBe(true);
    expect(outcome.stderr).toBe(''); // zero warnings
  });

  it('lists unreadable images in a sidecar and skips them', () => {
    const broken: ManifestRecord[] = [
      ...records.slice(0, 3),
      { imageId: 'ghost', relativePath: 'nowhere/ghost.png', labelId: 0, split: 'train' },
    ];
    const out = join(scratch, 'captions_broken.jsonl');
    const result = extractCaptions(broken, imageRoot, out);
    expect(result.written).toBe(3);
    expect(result.skipped).toEqual(['ghost']);
    const sidecar = readFileSync(`${out}.errors.jsonl`, 'utf-8').trim().split('\n');
    expect(sidecar).toHaveLength(1);
    expect(JSON.parse(sidecar[0]).image_id).toBe('ghost');
  });

  it('is deterministic across reruns', () => {
    const a = join(scratch, 'caps_a.jsonl');
    const b = join(scratch, 'caps_b.jsonl');
    extractCaptions(records, imageRoot, a);
    extractCaptions(records, imageRoot, b);
    expect(readFileSync(a, 'utf-8')).toBe(readFileSync(b, 'utf-8'));
  });
});

describe('feature extraction', () => {
  it('produces dim-128 files the primary ingests with zero warnings', () => {
    const out = join(scratch, 'features.p148feat');
    const backbone = getBackbone('tiny-cnn', 0);
    const count = extractFeatures(records, imageRoot, out, backbone);
    expect(count).toBe(records.length);

    const blob = readFileSync(out);
    expect(blob.readUInt32LE(12)).toBe(128); // header dim field

    const outcome = validateFeaturesWithPrimary(out);
    expect(outcome.ok, outcome.stderr).toBe(true);
    expect(outcome.stderr).toBe('');
  });

  it('same weights and eval mode give identical vectors across runs', () => {
    const a = join(scratch, 'feat_a.p148feat');
    const b = join(scratch, 'feat_b.p148feat');
    extractFeatures(records.slice(0, 8), imageRoot, a, getBackbone('tiny-cnn', 0));
    extractFeatures(records.slice(0, 8), imageRoot, b, getBackbone('tiny-cnn', 0));
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true);
  });

  it('round-trips through the primary with identical fusion logits', () => {
    const out = join(scratch, 'features_rt.p148feat');
    extractFeatures(records.slice(0, 10), imageRoot, out, getBackbone('tiny-cnn', 0));
    const vectors = readFeatures(out);
    const asJson: Record<string, number[]> = {};
    for (const [id, vec] of vectors) asJson[id] = Array.from(vec);
    const vectorsJson = join(scratch, 'vectors.json');
    writeFileSync(vectorsJson, JSON.stringify(asJson));

    const stdout = python(
      readFileSync(new URL('./helpers/crosscheck.py', import.meta.url), 'utf-8'),
      out,
      vectorsJson,
      join(scratch, 'primary_copy.p148feat'),
    );
    expect(stdout).toContain('crosscheck-ok');
  });
});

describe('fine-tuning', () => {
  it('epochs 0 leaves features equal to the pretrained backbone', () => {
    const outDir = join(scratch, 'ft0');
    rmSync(outDir, { recursive: true, force: true });
    const { featuresPath } = finetuneLowLevel(
      records,
      imageRoot,
      mkdirp(outDir),
      { lr: 1e-3, weightDecay: 1e-2, epochs: 0, batchSize: 16, seed: 0 },
    );
    const pretrained = join(scratch, 'pretrained.p148feat');
    extractFeatures(records, imageRoot, pretrained, getBackbone('tiny-cnn', 0));
    expect(readFileSync(featuresPath).equals(readFileSync(pretrained))).toBe(true);
  });

  it('two epochs beat 8-class chance on the train split and export one vector per record', () => {
    const outDir = mkdirp(join(scratch, 'ft2'));
    const outputs = finetuneLowLevel(
      records,
      imageRoot,
      outDir,
      { lr: 3e-3, weightDecay: 1e-2, epochs: 2, batchSize: 16, seed: 0 },
    );
    const last = outputs.log.at(-1)!;
    expect(last.top1).toBeGreaterThan(0.125);
    expect(readFeatures(outputs.featuresPath).size).toBe(records.length);
    expect(existsSync(outputs.checkpointPath)).toBe(true);

    const outcome = validateFeaturesWithPrimary(outputs.featuresPath);
    expect(outcome.ok, outcome.stderr).toBe(true);
  });

  it('dimension mismatches abort before any bytes are written', () => {
    const backbone = getBackbone('tiny-cnn', 0);
    const image = loadPng(join(imageRoot, records[0].relativePath));
    // sanity: the guard lives in extractBatch, exercised through a 64-d stub
    const stub = { id: 'stub-64', model: backbone.model };
    expect(() => extractBatch(stub, [image])).not.toThrow();
    const out = join(scratch, 'never.p148feat');
    const bad = {
      id: 'bad',
      model: {
        predict: () => ({ shape: [1, 64], dataSync: () => new Float32Array(64) }),
      },
    };
    expect(() =>
      extractFeatures(records.slice(0, 1), imageRoot, out, bad as never),
    ).toThrow(/128/);
    expect(existsSync(out)).toBe(false);
  });
});

function mkdirp(path: string): string {
  mkdirSync(path, { recursive: true });
  return path;
}
