import * as fs from 'fs';
import * as path from 'path';

import * as tf from '@tensorflow/tfjs';

import { ExporterConfig } from './config';
import { Dataset, makeDataset, takeRows } from './dataset';
import { exportEmbeddings, ExportResult } from './exportEmbeddings';
import { buildClassifier, EpochMetrics, trainClassifier } from './model';
import { exponentialProfile, ImbalanceProfile, sampleImbalanced } from './profile';

export interface ReferenceRunResult {
  profile: ImbalanceProfile;
  balanced: ExportResult;
  imbalanced: ExportResult;
  metrics: {
    balancedHistory: EpochMetrics[];
    imbalancedHistory: EpochMetrics[];
    imbalancedSubsetSize: number;
  };
}

async function runOne(
  cfg: ExporterConfig,
  data: Dataset,
  trainXs: Float32Array,
  trainLabels: Int32Array,
  tag: string,
  outDir: string,
  extraSplits: { name: string; xs: Float32Array; labels: Int32Array }[],
  logEvery?: number,
): Promise<{ exported: ExportResult; history: EpochMetrics[] }> {
  // Same architecture and same init seed for both runs: the training set is
  // the only thing that differs between the paired models.
  const model = buildClassifier({
    inputDim: data.dim,
    hidden: cfg.model.hidden,
    featureDim: cfg.model.featureDim,
    numClasses: cfg.dataset.numClasses,
    seed: cfg.seed,
  });
  const history = await trainClassifier(model, trainXs, trainLabels, data.dim, cfg.dataset.numClasses, {
    epochs: cfg.training.epochs,
    batchSize: cfg.training.batchSize,
    learningRate: cfg.training.learningRate,
    optimizer: cfg.training.optimizer,
    weightDecay: cfg.training.weightDecay,
    seed: cfg.seed,
    logEvery,
  });
  const exported = exportEmbeddings({
    model,
    outDir,
    splits: [
      { name: 'train', xs: trainXs, labels: trainLabels, split: 'train' },
      ...extraSplits.map((s) => ({ ...s, split: 'train' as const })),
      { name: 'test', xs: data.xsTest, labels: data.labelsTest, split: 'test' },
    ],
    metadata: { training: tag, seed: String(cfg.seed) },
  });
  model.dispose();
  return { exported, history };
}

/**
 * The paired-run pipeline: one model trained on the balanced pool, one on an
 * exponentially imbalanced subset of it, both exported with their heads.
 *
 * The imbalanced run additionally exports the full pool's embeddings
 * (train_full) so a linear head can later be refit on balanced data without
 * touching the extractor.
 */
export async function trainReferenceModel(
  cfg: ExporterConfig,
  outDir: string,
  logEvery?: number,
): Promise<ReferenceRunResult> {
  await tf.setBackend('cpu');
  await tf.ready();

  const data = makeDataset({ ...cfg.dataset, seed: cfg.seed });
  const profile = exponentialProfile(
    cfg.dataset.numClasses,
    cfg.profile.maxRatio,
    cfg.dataset.trainPerClass,
  );
  const subsetIdx = sampleImbalanced(data.labelsTrain, profile, cfg.seed);
  const subset = takeRows(data.xsTrain, data.labelsTrain, data.dim, subsetIdx);

  const balanced = await runOne(
    cfg,
    data,
    data.xsTrain,
    data.labelsTrain,
    'balanced',
    path.join(outDir, 'balanced'),
    [],
    logEvery,
  );
  const imbalanced = await runOne(
    cfg,
    data,
    subset.xs,
    subset.labels,
    'imbalanced',
    path.join(outDir, 'imbalanced'),
    [{ name: 'train_full', xs: data.xsTrain, labels: data.labelsTrain }],
    logEvery,
  );

  const metrics = {
    balancedHistory: balanced.history,
    imbalancedHistory: imbalanced.history,
    imbalancedSubsetSize: subsetIdx.length,
  };
  fs.mkdirSync(outDir, { recursive: true });
  fs.writeFileSync(
    path.join(outDir, 'metrics.json'),
    JSON.stringify({ config: cfg, perClassCounts: profile.perClassCounts, ...metrics }, null, 2) + '\n',
  );
  return { profile, balanced: balanced.exported, imbalanced: imbalanced.exported, metrics };
}
