/**
 * Deterministic toy classifiers plus the final-linear-layer hook point.
 *
 * The exporter works on any tfjs LayersModel whose last layer is a Dense
 * with linear activation; the "penultimate features" are whatever feeds
 * that layer.  The builders here create seeded models for fixtures and
 * benchmarks (weights come from a local PRNG, not tfjs initializers, so
 * checkpoints are bit-reproducible).
 */

import * as tf from '@tensorflow/tfjs';
import { UnsupportedModelError } from './errors.js';

/** Small fast PRNG, deterministic across platforms. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Standard normal draws via Box-Muller on top of mulberry32. */
export function gaussianArray(n: number, rand: () => number, scale = 1): Float32Array {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i += 2) {
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v) * scale;
    if (i + 1 < n) {
      out[i + 1] = r * Math.sin(2 * Math.PI * v) * scale;
    }
  }
  return out;
}

export interface ClassifierOptions {
  height: number;
  width: number;
  hiddenUnits: number;
  classCount: number;
  seed: number;
}

/**
 * flatten -> dense(hidden, relu) -> dense(classes, linear) with seeded
 * He-scaled weights.  The relu output is the penultimate feature vector.
 */
export function buildClassifier(options: ClassifierOptions): tf.LayersModel {
  const { height, width, hiddenUnits, classCount, seed } = options;
  const model = tf.sequential({
    layers: [
      tf.layers.flatten({ inputShape: [height, width] }),
      tf.layers.dense({ units: hiddenUnits, activation: 'relu' }),
      tf.layers.dense({ units: classCount }),
    ],
  });
  const rand = mulberry32(seed);
  const inputDim = height * width;
  model.setWeights([
    tf.tensor2d(gaussianArray(inputDim * hiddenUnits, rand, Math.sqrt(2 / inputDim)), [
      inputDim,
      hiddenUnits,
    ]),
    tf.tensor1d(gaussianArray(hiddenUnits, rand, 0.1)),
    tf.tensor2d(gaussianArray(hiddenUnits * classCount, rand, Math.sqrt(2 / hiddenUnits)), [
      hiddenUnits,
      classCount,
    ]),
    tf.tensor1d(gaussianArray(classCount, rand, 0.1)),
  ]);
  return model;
}

/**
 * flatten -> dense(classes, linear): the backbone is the identity, so the
 * exported features must equal the flattened pixel vectors.
 */
export function buildIdentityFixture(
  height: number,
  width: number,
  classCount: number,
  seed: number,
): tf.LayersModel {
  const model = tf.sequential({
    layers: [
      tf.layers.flatten({ inputShape: [height, width] }),
      tf.layers.dense({ units: classCount }),
    ],
  });
  const rand = mulberry32(seed);
  const inputDim = height * width;
  model.setWeights([
    tf.tensor2d(gaussianArray(inputDim * classCount, rand, Math.sqrt(1 / inputDim)), [
      inputDim,
      classCount,
    ]),
    tf.tensor1d(gaussianArray(classCount, rand, 0.1)),
  ]);
  return model;
}

/** A model whose last layer is not a linear Dense (for the error path). */
export function buildSoftmaxModel(height: number, width: number, classCount: number): tf.LayersModel {
  return tf.sequential({
    layers: [
      tf.layers.flatten({ inputShape: [height, width] }),
      tf.layers.dense({ units: classCount, activation: 'softmax' }),
    ],
  });
}

/** The final classifier layer, or a typed error when the model has none. */
export function finalLinearLayer(model: tf.LayersModel): tf.layers.Layer {
  if (model.layers.length === 0) {
    throw new UnsupportedModelError('model has no layers');
  }
  const last = model.layers[model.layers.length - 1];
  if (last.getClassName() !== 'Dense') {
    throw new UnsupportedModelError(
      `final layer is ${last.getClassName()}, expected a Dense classifier`,
    );
  }
  const activation = (last.getConfig() as { activation?: string }).activation ?? 'linear';
  if (activation !== 'linear') {
    throw new UnsupportedModelError(
      `final Dense uses activation '${activation}', expected linear logits`,
    );
  }
  return last;
}

/** Truncation of the model at the final classifier's input (the feature hook). */
export function penultimateModel(model: tf.LayersModel): tf.LayersModel {
  const last = finalLinearLayer(model);
  const hook = last.input;
  if (Array.isArray(hook)) {
    throw new UnsupportedModelError('final classifier has multiple inputs');
  }
  return tf.model({ inputs: model.inputs, outputs: hook });
}
