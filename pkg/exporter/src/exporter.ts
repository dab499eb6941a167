/**
 * Bridge from tfjs checkpoints to the toolkit's FVEC world: penultimate
 * features per image, the head's weight matrix and bias, the model's own
 * logits for consistency checks, and a plain-text manifest tying the
 * pieces together.
 */

import * as fs from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { ExportInputError, FileFormatError } from './errors.js';
import { writeFvec } from './fvec.js';
import { finalLinearLayer, penultimateModel } from './model.js';
import { readPgm } from './pgm.js';

export interface HeadExport {
  featureDim: number;
  classCount: number;
  weightsPath: string;
  biasPath: string;
}

export interface ExportManifest {
  modelId: string;
  featureDim: number;
  classCount: number;
  imageCount: number;
  /** File names relative to the manifest's directory. */
  features: string;
  logits: string;
  weights: string;
  bias: string;
  normalization: string;
}

export const NORMALIZATION_NOTE =
  'PGM pixels divided by maxval into [0,1]; no resize, no mean/std normalization';

/** Write the final classifier's W (m x K) and bias (1 x K) as FVEC files. */
export function exportHead(model: tf.LayersModel, outDir: string): HeadExport {
  const final = finalLinearLayer(model);
  const weights = final.getWeights();
  if (weights.length !== 2) {
    throw new ExportInputError('final Dense must carry kernel and bias');
  }
  const [kernel, bias] = weights;
  const [featureDim, classCount] = kernel.shape as [number, number];
  fs.mkdirSync(outDir, { recursive: true });
  const weightsPath = path.join(outDir, 'W.fvec');
  const biasPath = path.join(outDir, 'b.fvec');
  writeFvec(
    { rows: featureDim, cols: classCount, data: kernel.dataSync() as Float32Array },
    weightsPath,
  );
  writeFvec({ rows: 1, cols: classCount, data: bias.dataSync() as Float32Array }, biasPath);
  return { featureDim, classCount, weightsPath, biasPath };
}

/**
 * Run every .pgm under imageDir (sorted filename order) through the model,
 * writing features.fvec, logits.fvec, W.fvec, b.fvec and manifest.txt.
 * Nothing is written when the folder is empty or the model is unsupported.
 */
export function exportFeatures(
  model: tf.LayersModel,
  imageDir: string,
  outDir: string,
  modelId = 'tfjs-model',
): ExportManifest {
  const names = fs
    .readdirSync(imageDir)
    .filter((n) => n.endsWith('.pgm'))
    .sort();
  if (names.length === 0) {
    throw new ExportInputError(`no .pgm images found in ${imageDir}`);
  }
  finalLinearLayer(model); // validate the architecture before any writes

  const first = readPgm(path.join(imageDir, names[0]));
  const batch = new Float32Array(names.length * first.height * first.width);
  names.forEach((name, index) => {
    const image = readPgm(path.join(imageDir, name));
    if (image.height !== first.height || image.width !== first.width) {
      throw new ExportInputError(
        `${name}: size ${image.height}x${image.width} differs from ${first.height}x${first.width}`,
      );
    }
    batch.set(image.pixels, index * image.pixels.length);
  });

  const manifest = tf.tidy(() => {
    const input = tf.tensor3d(batch, [names.length, first.height, first.width]);
    const features = penultimateModel(model).predict(input) as tf.Tensor2D;
    const logits = model.predict(input) as tf.Tensor2D;

    const head = exportHead(model, outDir);
    if (features.shape[1] !== head.featureDim || logits.shape[1] !== head.classCount) {
      throw new ExportInputError(
        `hooked dims ${features.shape[1]}->${logits.shape[1]} disagree with head ` +
          `${head.featureDim}->${head.classCount}`,
      );
    }
    writeFvec(
      {
        rows: names.length,
        cols: head.featureDim,
        data: features.dataSync() as Float32Array,
      },
      path.join(outDir, 'features.fvec'),
    );
    writeFvec(
      { rows: names.length, cols: head.classCount, data: logits.dataSync() as Float32Array },
      path.join(outDir, 'logits.fvec'),
    );
    return {
      modelId,
      featureDim: head.featureDim,
      classCount: head.classCount,
      imageCount: names.length,
      features: 'features.fvec',
      logits: 'logits.fvec',
      weights: 'W.fvec',
      bias: 'b.fvec',
      normalization: NORMALIZATION_NOTE,
    };
  });
  writeManifest(manifest, path.join(outDir, 'manifest.txt'));
  return manifest;
}

export function writeManifest(manifest: ExportManifest, manifestPath: string): void {
  const lines = [
    `model_id=${manifest.modelId}`,
    `feature_dim=${manifest.featureDim}`,
    `class_count=${manifest.classCount}`,
    `image_count=${manifest.imageCount}`,
    `features=${manifest.features}`,
    `logits=${manifest.logits}`,
    `weights=${manifest.weights}`,
    `bias=${manifest.bias}`,
    `normalization=${manifest.normalization}`,
  ];
  fs.writeFileSync(manifestPath, lines.join('\n') + '\n');
}

export function readManifest(manifestPath: string): ExportManifest {
  const entries = new Map<string, string>();
  for (const raw of fs.readFileSync(manifestPath, 'utf-8').split('\n')) {
    const line = raw.trim();
    if (!line || line.startsWith('#')) continue;
    const eq = line.indexOf('=');
    if (eq < 0) {
      throw new FileFormatError(`${manifestPath}: malformed line ${line}`);
    }
    entries.set(line.slice(0, eq), line.slice(eq + 1));
  }
  const need = (key: string): string => {
    const value = entries.get(key);
    if (value === undefined) {
      throw new FileFormatError(`${manifestPath}: missing key ${key}`);
    }
    return value;
  };
  return {
    modelId: need('model_id'),
    featureDim: Number(need('feature_dim')),
    classCount: Number(need('class_count')),
    imageCount: Number(need('image_count')),
    features: need('features'),
    logits: need('logits'),
    weights: need('weights'),
    bias: need('bias'),
    normalization: need('normalization'),
  };
}
