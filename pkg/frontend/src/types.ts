/** Shared types for the adapter. */

export interface ManifestRecord {
  imageId: string;
  relativePath: string;
  labelId: number;
  split: 'train' | 'val' | 'test';
  corruption?: { kind: string; level: number };
}

export interface CaptionRecord {
  imageId: string;
  caption: string;
  labelId?: number;
}

export interface FinetuneHyper {
  lr: number;
  weightDecay: number;
  epochs: number;
  batchSize: number;
  seed: number;
}

/** Defaults mirror the published low-level training recipe. */
export const DEFAULT_FINETUNE: FinetuneHyper = {
  lr: 1e-3,
  weightDecay: 1e-2,
  epochs: 25,
  batchSize: 64,
  seed: 0,
};

export interface AdapterConfig {
  captioner: string;
  backbone: string;
  finetune: FinetuneHyper;
}

export const FEATURE_DIM = 128;
export const NUM_CLASSES = 148;

export interface DecodedImage {
  width: number;
  height: number;
  /** Row-major RGB in [0, 1], length = width * height * 3. */
  data: Float32Array;
}
