/** Writers for the primary toolkit's exchange formats.
 *
 * The binary feature format must match "P148FEAT" bit for bit: little-endian
 * header (u32 version, u32 dim, u64 count) and per record a u16 id length,
 * UTF-8 id bytes, then 128 float32 values.  Records are written in sorted-id
 * order, which makes the file byte-identical to the primary's own writer for
 * the same vectors.
 */

import { readFileSync, renameSync, writeFileSync } from 'fs';

import { CaptionRecord, FEATURE_DIM } from './types.js';

const MAGIC = 'P148FEAT';
const VERSION = 1;

export function encodeFeatures(vectors: Map<string, Float32Array>): Buffer {
  const ids = [...vectors.keys()].sort();
  const encoder = new TextEncoder();
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(8 + 4 + 4 + 8);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(VERSION, 8);
  header.writeUInt32LE(FEATURE_DIM, 12);
  header.writeBigUInt64LE(BigInt(ids.length), 16);
  chunks.push(header);
  for (const id of ids) {
    const vec = vectors.get(id)!;
    if (vec.length !== FEATURE_DIM) {
      throw new Error(`feature for ${id} has dimension ${vec.length}, expected ${FEATURE_DIM}`);
    }
    const idBytes = encoder.encode(id);
    const record = Buffer.alloc(2 + idBytes.length + 4 * FEATURE_DIM);
    record.writeUInt16LE(idBytes.length, 0);
    Buffer.from(idBytes).copy(record, 2);
    for (let i = 0; i < FEATURE_DIM; i++) {
      record.writeFloatLE(vec[i], 2 + idBytes.length + 4 * i);
    }
    chunks.push(record);
  }
  return Buffer.concat(chunks);
}

export function writeFeatures(vectors: Map<string, Float32Array>, path: string): void {
  atomicWrite(path, encodeFeatures(vectors));
}

/** Reader used by the adapter's own tests; the primary remains the authority. */
export function readFeatures(path: string): Map<string, Float32Array> {
  const blob = readFileSync(path);
  if (blob.length < 24 || blob.toString('ascii', 0, 8) !== MAGIC) {
    throw new Error(`${path}: not a ${MAGIC} file`);
  }
  const version = blob.readUInt32LE(8);
  const dim = blob.readUInt32LE(12);
  const count = Number(blob.readBigUInt64LE(16));
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`);
  if (dim !== FEATURE_DIM) throw new Error(`${path}: dimension ${dim}, expected ${FEATURE_DIM}`);
  const out = new Map<string, Float32Array>();
  let offset = 24;
  for (let i = 0; i < count; i++) {
    const idLen = blob.readUInt16LE(offset);
    offset += 2;
    const id = blob.toString('utf-8', offset, offset + idLen);
    offset += idLen;
    const vec = new Float32Array(FEATURE_DIM);
    for (let j = 0; j < FEATURE_DIM; j++) {
      vec[j] = blob.readFloatLE(offset + 4 * j);
    }
    offset += 4 * FEATURE_DIM;
    out.set(id, vec);
  }
  if (offset !== blob.length) throw new Error(`${path}: trailing bytes`);
  return out;
}

export function encodeCaptions(records: CaptionRecord[]): string {
  // alphabetical key order matches the primary's canonical writer
  return (
    records
      .map((rec) => {
        const obj: Record<string, unknown> = { caption: rec.caption, image_id: rec.imageId };
        if (rec.labelId !== undefined) obj['label_id'] = rec.labelId;
        return JSON.stringify(obj);
      })
      .join('\n') + '\n'
  );
}

export function writeCaptions(records: CaptionRecord[], path: string): void {
  atomicWrite(path, Buffer.from(encodeCaptions(records), 'utf-8'));
}

/** Single-writer discipline: full temp write, then rename into place. */
export function atomicWrite(path: string, data: Buffer): void {
  const tmp = `${path}.tmp`;
  writeFileSync(tmp, data);
  renameSync(tmp, path);
}
