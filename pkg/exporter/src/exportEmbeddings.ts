import * as path from 'path';

import * as tf from '@tensorflow/tfjs';

import { ShapeMismatchError, Split, writeClassifierHead, writeEmbeddingSet } from './embx';

/** The requested tap point does not exist or does not feed the head. */
export class HookFailureError extends Error {}

export interface SplitToExport {
  /** Directory name under outDir, e.g. "train". */
  name: string;
  xs: Float32Array;
  labels: Int32Array;
  split: Split;
}

export interface ExportSpec {
  model: tf.LayersModel;
  outDir: string;
  splits: SplitToExport[];
  featureLayer?: string;
  headLayer?: string;
  metadata?: Record<string, string>;
}

export interface ExportResult {
  headDir: string;
  splitDirs: Record<string, string>;
}

function getLayer(model: tf.LayersModel, name: string): tf.layers.Layer {
  try {
    return model.getLayer(name);
  } catch {
    throw new HookFailureError(`model has no layer named '${name}'`);
  }
}

/**
 * Dump feature embeddings, labels, and logits for each split, plus the final
 * linear layer, as EMBX directories.
 *
 * The tap point is the named feature layer's output, which must be the head
 * layer's direct input so that fe @ weights + bias reproduces the exported
 * logits. Embeddings must come out non-negative (a post-threshold tap);
 * anything else means the hook is at the wrong place.
 */
export function exportEmbeddings(spec: ExportSpec): ExportResult {
  const featureName = spec.featureLayer ?? 'features';
  const headName = spec.headLayer ?? 'head';
  const feature = getLayer(spec.model, featureName);
  const head = getLayer(spec.model, headName);

  const featureOut = feature.output as tf.SymbolicTensor;
  const headIn = head.input as tf.SymbolicTensor;
  if (Array.isArray(featureOut) || Array.isArray(headIn) || headIn.name !== featureOut.name) {
    throw new HookFailureError(
      `layer '${headName}' does not consume the output of '${featureName}'; ` +
        'exported logits would not decompose over the tap point',
    );
  }

  const headWeights = head.getWeights();
  const kernel = headWeights[0];
  const [h, numClasses] = kernel.shape as [number, number];
  const kernelData = kernel.dataSync() as Float32Array;
  const weights = new Float32Array(numClasses * h);
  for (let c = 0; c < numClasses; c++) {
    for (let j = 0; j < h; j++) {
      weights[c * h + j] = kernelData[j * numClasses + c];
    }
  }
  const bias = headWeights.length > 1 ? (headWeights[1].dataSync() as Float32Array) : undefined;

  const tap = tf.model({ inputs: spec.model.inputs, outputs: featureOut });
  const inputDim = (spec.model.inputs[0].shape[1] ?? 0) as number;

  const splitDirs: Record<string, string> = {};
  for (const part of spec.splits) {
    const n = part.labels.length;
    if (part.xs.length !== n * inputDim) {
      throw new ShapeMismatchError(
        `split '${part.name}': ${part.xs.length} values for ${n} labels of dim ${inputDim}`,
      );
    }
    const { fe, logits } = tf.tidy(() => {
      const x = tf.tensor2d(part.xs, [n, inputDim]);
      const feT = tap.predict(x, { batchSize: 512 }) as tf.Tensor;
      const logitsT = spec.model.predict(x, { batchSize: 512 }) as tf.Tensor;
      return {
        fe: feT.dataSync() as Float32Array,
        logits: logitsT.dataSync() as Float32Array,
      };
    });
    if (fe.length !== n * h) {
      throw new ShapeMismatchError(
        `split '${part.name}': tap emitted ${fe.length / n} dims per row, head expects ${h}`,
      );
    }
    for (let i = 0; i < fe.length; i++) {
      if (fe[i] < 0) {
        throw new HookFailureError(
          `split '${part.name}': negative activation at the tap point; ` +
            'the feature layer must end in a thresholding nonlinearity',
        );
      }
    }
    const dir = path.join(spec.outDir, part.name);
    splitDirs[part.name] = writeEmbeddingSet(
      dir,
      { fe, h, labels: part.labels, numClasses, split: part.split, logits },
      spec.metadata ?? {},
    );
  }

  const headDir = writeClassifierHead(
    path.join(spec.outDir, 'head'),
    { weights, h, numClasses, bias },
    spec.metadata ?? {},
  );
  return { headDir, splitDirs };
}
