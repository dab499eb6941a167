/**
 * Single-file JSON checkpoints for tfjs LayersModels: topology plus
 * weight specs, with the weight buffer base64-encoded.  Self-contained
 * and dependency-free on the filesystem handlers of tfjs-node.
 */

import * as fs from 'fs';
import * as tf from '@tensorflow/tfjs';
import { FileFormatError } from './errors.js';

interface CheckpointFile {
  format: string;
  modelTopology: unknown;
  weightSpecs: tf.io.WeightsManifestEntry[];
  weightDataBase64: string;
}

const CHECKPOINT_FORMAT = 'oodkit-exporter-checkpoint-v1';

function joinWeightData(data: tf.io.WeightData | undefined): ArrayBuffer {
  if (data === undefined) {
    throw new FileFormatError('model artifacts carry no weight data');
  }
  if (data instanceof ArrayBuffer) {
    return data;
  }
  const parts = data as ArrayBuffer[];
  const total = parts.reduce((n, part) => n + part.byteLength, 0);
  const joined = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    joined.set(new Uint8Array(part), offset);
    offset += part.byteLength;
  }
  return joined.buffer;
}

export async function saveCheckpoint(model: tf.LayersModel, path: string): Promise<void> {
  let captured: tf.io.ModelArtifacts | undefined;
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      captured = artifacts;
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON',
        },
      };
    }),
  );
  if (captured === undefined || captured.modelTopology === undefined) {
    throw new FileFormatError('model.save produced no artifacts');
  }
  const payload: CheckpointFile = {
    format: CHECKPOINT_FORMAT,
    modelTopology: captured.modelTopology,
    weightSpecs: captured.weightSpecs ?? [],
    weightDataBase64: Buffer.from(joinWeightData(captured.weightData)).toString('base64'),
  };
  fs.writeFileSync(path, JSON.stringify(payload));
}

export async function loadCheckpoint(path: string): Promise<tf.LayersModel> {
  let parsed: CheckpointFile;
  try {
    parsed = JSON.parse(fs.readFileSync(path, 'utf-8')) as CheckpointFile;
  } catch (err) {
    throw new FileFormatError(`${path}: not a JSON checkpoint (${String(err)})`);
  }
  if (parsed.format !== CHECKPOINT_FORMAT) {
    throw new FileFormatError(`${path}: unknown checkpoint format ${parsed.format}`);
  }
  const raw = Buffer.from(parsed.weightDataBase64, 'base64');
  const weightData = raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength);
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: parsed.modelTopology as {},
      weightSpecs: parsed.weightSpecs,
      weightData,
    }),
  );
}
