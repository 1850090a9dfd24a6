export { Rng } from './rng';
export { DatasetSpec, Dataset, makeDataset, takeRows } from './dataset';
export {
  ImbalanceProfile,
  InsufficientClassDataError,
  exponentialProfile,
  sampleImbalanced,
} from './profile';
export {
  ClassifierHeadData,
  EmbeddingSetData,
  FORMAT_VERSION,
  ShapeMismatchError,
  Split,
  SPLITS,
  writeClassifierHead,
  writeEmbeddingSet,
} from './embx';
export {
  FEATURE_LAYER,
  HEAD_LAYER,
  ModelSpec,
  TrainingDivergedError,
  TrainOptions,
  EpochMetrics,
  buildClassifier,
  trainClassifier,
  evaluateAccuracy,
} from './model';
export {
  ExportSpec,
  ExportResult,
  HookFailureError,
  SplitToExport,
  exportEmbeddings,
} from './exportEmbeddings';
export { ExporterConfig, loadConfig, parseConfig } from './config';
export { ReferenceRunResult, trainReferenceModel } from './trainReference';
