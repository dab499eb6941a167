export { ExportInputError, FileFormatError, UnsupportedModelError } from './errors.js';
export { FVEC_MAGIC, FVEC_VERSION, readFvec, writeFvec } from './fvec.js';
export type { FvecMatrix } from './fvec.js';
export { readPgm, writePgm } from './pgm.js';
export type { GrayImage } from './pgm.js';
export {
  buildClassifier,
  buildIdentityFixture,
  buildSoftmaxModel,
  finalLinearLayer,
  gaussianArray,
  mulberry32,
  penultimateModel,
} from './model.js';
export type { ClassifierOptions } from './model.js';
export { loadCheckpoint, saveCheckpoint } from './checkpoint.js';
export {
  NORMALIZATION_NOTE,
  exportFeatures,
  exportHead,
  readManifest,
  writeManifest,
} from './exporter.js';
export type { ExportManifest, HeadExport } from './exporter.js';
