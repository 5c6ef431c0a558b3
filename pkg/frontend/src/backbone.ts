/** Pluggable convolutional backbones producing 128-d feature vectors.
 *
 * The built-in 'tiny-cnn' is a small seeded convnet whose last layer is the
 * 128-d feature map; heavier pretrained models plug in through the registry
 * or as a saved adapter checkpoint.  Fine-tuning attaches a 148-way
 * classification head, trains with Adam plus decoupled weight decay, and the
 * feature layer remains the penultimate output.
 */

import * as tf from '@tensorflow/tfjs';
import { readFileSync } from 'fs';

import { atomicWrite } from './formats.js';
import { resizeBilinear } from './png.js';
import { Rng } from './rng.js';
import { DecodedImage, FEATURE_DIM, FinetuneHyper, NUM_CLASSES } from './types.js';

export const INPUT_SIZE = 32;

export interface Backbone {
  id: string;
  /** Trunk ending in the 128-d feature layer. */
  model: tf.LayersModel;
}

export type BackboneFactory = (seed: number) => Backbone;

const registry = new Map<string, BackboneFactory>();

export function registerBackbone(id: string, factory: BackboneFactory): void {
  registry.set(id, factory);
}

export function getBackbone(id: string, seed = 0): Backbone {
  const factory = registry.get(id);
  if (!factory) {
    throw new Error(
      `unknown backbone '${id}' (available: ${[...registry.keys()].join(', ')}); ` +
        'register custom models via registerBackbone()',
    );
  }
  return factory(seed);
}

function tinyCnn(seed: number): Backbone {
  const rng = new Rng(seed * 7919 + 17);
  const layerSeed = () => rng.nextUint32() % 2 ** 30;
  const model = tf.sequential({ name: 'tiny-cnn' });
  model.add(
    tf.layers.conv2d({
      inputShape: [INPUT_SIZE, INPUT_SIZE, 3],
      filters: 8,
      kernelSize: 3,
      strides: 2,
      activation: 'relu',
      padding: 'same',
      kernelInitializer: tf.initializers.glorotUniform({ seed: layerSeed() }),
    }),
  );
  model.add(
    tf.layers.conv2d({
      filters: 16,
      kernelSize: 3,
      strides: 2,
      activation: 'relu',
      padding: 'same',
      kernelInitializer: tf.initializers.glorotUniform({ seed: layerSeed() }),
    }),
  );
  model.add(tf.layers.averagePooling2d({ poolSize: 2 }));
  model.add(tf.layers.flatten());
  // the modified last layer: a 128-dimensional feature map
  model.add(
    tf.layers.dense({
      units: FEATURE_DIM,
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed: layerSeed() }),
    }),
  );
  return { id: 'tiny-cnn', model };
}

registerBackbone('tiny-cnn', tinyCnn);

export function imagesToTensor(images: DecodedImage[]): tf.Tensor4D {
  const batch = new Float32Array(images.length * INPUT_SIZE * INPUT_SIZE * 3);
  images.forEach((image, i) => {
    const resized =
      image.width === INPUT_SIZE && image.height === INPUT_SIZE
        ? image
        : resizeBilinear(image, INPUT_SIZE, INPUT_SIZE);
    batch.set(resized.data, i * INPUT_SIZE * INPUT_SIZE * 3);
  });
  return tf.tensor4d(batch, [images.length, INPUT_SIZE, INPUT_SIZE, 3]);
}

export function extractBatch(backbone: Backbone, images: DecodedImage[]): Float32Array[] {
  return tf.tidy(() => {
    const input = imagesToTensor(images);
    const output = backbone.model.predict(input) as tf.Tensor;
    const [, dim] = output.shape;
    if (dim !== FEATURE_DIM) {
      throw new Error(`backbone '${backbone.id}' produced dimension ${dim}, expected ${FEATURE_DIM}`);
    }
    const flat = output.dataSync() as Float32Array;
    return images.map((_, i) => flat.slice(i * FEATURE_DIM, (i + 1) * FEATURE_DIM));
  });
}

// ---------------------------------------------------------------------------
// fine-tuning
// ---------------------------------------------------------------------------

export interface FinetuneResult {
  backbone: Backbone;
  /** Per-epoch train loss and top-1 accuracy on the training split. */
  log: { epoch: number; loss: number; top1: number }[];
}

export function finetune(
  backbone: Backbone,
  images: DecodedImage[],
  labels: number[],
  hyper: FinetuneHyper,
  freezeTrunk = false,
): FinetuneResult {
  const head = tf.layers.dense({
    units: NUM_CLASSES,
    kernelInitializer: tf.initializers.glorotUniform({ seed: hyper.seed + 1 }),
    name: 'class_head',
  });
  if (freezeTrunk) {
    for (const layer of backbone.model.layers) layer.trainable = false;
  }
  // functional composition shares the trunk's weight variables, so training
  // the full model fine-tunes the backbone in place
  const full = tf.model({
    inputs: backbone.model.inputs,
    outputs: head.apply(backbone.model.outputs[0]) as tf.SymbolicTensor,
  });

  const xs = imagesToTensor(images);
  const ys = tf.tensor1d(labels, 'int32');
  const optimizer = tf.train.adam(hyper.lr);
  const rng = new Rng(hyper.seed);
  const log: FinetuneResult['log'] = [];

  for (let epoch = 0; epoch < hyper.epochs; epoch++) {
    const order = rng.permutation(images.length);
    let epochLoss = 0;
    for (let start = 0; start < order.length; start += hyper.batchSize) {
      const idx = order.slice(start, start + hyper.batchSize);
      const loss = tf.tidy(() => {
        const bx = tf.gather(xs, idx);
        const by = tf.gather(ys, idx);
        const lossValue = optimizer.minimize(
          () => {
            const logits = full.apply(bx) as tf.Tensor2D;
            return tf.losses.softmaxCrossEntropy(tf.oneHot(by, NUM_CLASSES), logits);
          },
          true,
        )!;
        return lossValue.dataSync()[0];
      });
      // decoupled weight decay, applied outside the adaptive update
      if (hyper.weightDecay > 0) {
        tf.tidy(() => {
          for (const weight of full.trainableWeights) {
            const variable = weight.read() as tf.Tensor;
            (weight as unknown as { write: (t: tf.Tensor) => void }).write(
              variable.mul(1 - hyper.lr * hyper.weightDecay),
            );
          }
        });
      }
      epochLoss += loss * idx.length;
    }
    const top1 = tf.tidy(() => {
      const logits = full.apply(xs) as tf.Tensor2D;
      const pred = logits.argMax(1);
      return pred.equal(ys).mean().dataSync()[0];
    });
    log.push({ epoch: epoch + 1, loss: epochLoss / images.length, top1 });
    if (!Number.isFinite(log[log.length - 1].loss)) {
      xs.dispose();
      ys.dispose();
      throw new Error(`fine-tuning diverged at epoch ${epoch + 1} (non-finite loss)`);
    }
  }
  xs.dispose();
  ys.dispose();
  return { backbone, log };
}

// ---------------------------------------------------------------------------
// adapter-internal checkpointing (weights as JSON; small models only)
// ---------------------------------------------------------------------------

export function saveBackbone(backbone: Backbone, path: string): void {
  const weights = backbone.model.getWeights().map((w) => ({
    shape: w.shape,
    data: Array.from(w.dataSync() as Float32Array),
  }));
  atomicWrite(path, Buffer.from(JSON.stringify({ id: backbone.id, weights }), 'utf-8'));
}

export function loadBackbone(path: string, seed = 0): Backbone {
  const obj = JSON.parse(readFileSync(path, 'utf-8')) as {
    id: string;
    weights: { shape: number[]; data: number[] }[];
  };
  const backbone = getBackbone(obj.id, seed);
  backbone.model.setWeights(obj.weights.map((w) => tf.tensor(w.data, w.shape)));
  return backbone;
}
