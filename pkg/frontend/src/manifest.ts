/** Reader for the primary toolkit's dataset manifest JSONL. */

import { readFileSync } from 'fs';

import { ManifestRecord } from './types.js';

export function readManifest(path: string): ManifestRecord[] {
  const records: ManifestRecord[] = [];
  const lines = readFileSync(path, 'utf-8').split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${i + 1}: invalid JSON (${err})`);
    }
    if (!('image_id' in obj)) {
      if (obj['schema'] === 'scene-robust/manifest/v1') continue; // meta line
      throw new Error(`${path}:${i + 1}: record missing image_id`);
    }
    const corruption = obj['corruption'] as { kind: string; level: number } | undefined;
    records.push({
      imageId: String(obj['image_id']),
      relativePath: String(obj['relative_path']),
      labelId: Number(obj['label_id']),
      split: obj['split'] as ManifestRecord['split'],
      corruption: corruption ? { kind: corruption.kind, level: Number(corruption.level) } : undefined,
    });
  }
  return records;
}
