import * as tf from '@tensorflow/tfjs';

import { Rng } from './rng';

/** Training loss left the finite range; the run cannot be exported. */
export class TrainingDivergedError extends Error {}

export const FEATURE_LAYER = 'features';
export const HEAD_LAYER = 'head';

export interface ModelSpec {
  inputDim: number;
  /** Widths of the hidden dense->norm->ReLU blocks before the feature layer. */
  hidden: number[];
  /** Width of the final normalized ReLU layer; its output is the embedding. */
  featureDim: number;
  numClasses: number;
  seed: number;
}

/**
 * Small normalized ReLU classifier: a stack of dense -> batch-norm -> ReLU
 * blocks, a named post-ReLU feature layer, then a named linear head. The
 * feature layer output is the export tap. Normalizing before each ReLU puts
 * units on a common scale regardless of how often they fire, so a unit that
 * is active on only a sliver of the data stands proportionally taller when
 * it does fire.
 */
export function buildClassifier(spec: ModelSpec): tf.LayersModel {
  const model = tf.sequential();
  model.add(tf.layers.inputLayer({ inputShape: [spec.inputDim] }));
  let seed = spec.seed;
  const dense = (units: number, name: string) =>
    tf.layers.dense({
      units,
      name,
      kernelInitializer: tf.initializers.heNormal({ seed: seed++ }),
      biasInitializer: 'zeros',
    });
  const addBlock = (units: number, name: string, reluName: string) => {
    model.add(dense(units, name));
    model.add(tf.layers.batchNormalization({ name: `${name}_norm` }));
    model.add(tf.layers.activation({ activation: 'relu', name: reluName }));
  };
  spec.hidden.forEach((units, i) => addBlock(units, `hidden_${i}`, `hidden_${i}_relu`));
  addBlock(spec.featureDim, 'features_dense', FEATURE_LAYER);
  model.add(dense(spec.numClasses, HEAD_LAYER));
  return model;
}

export interface TrainOptions {
  epochs: number;
  batchSize: number;
  learningRate: number;
  /** 'sgd' is momentum 0.9; adam converges faster on easy fits. */
  optimizer?: 'adam' | 'sgd';
  /** L2 penalty on the dense kernels, added to the batch loss. */
  weightDecay?: number;
  /** Drives per-epoch batch shuffling; training is repeatable per seed. */
  seed: number;
  logEvery?: number;
}

export interface EpochMetrics {
  epoch: number;
  meanLoss: number;
  /** Whole-train-set accuracy; only measured on logged epochs and the last. */
  trainAccuracy?: number;
}

/**
 * Minibatch softmax cross-entropy training. Runs on the deterministic cpu
 * backend; identical (model init, data, options) reproduce identical weights.
 */
export async function trainClassifier(
  model: tf.LayersModel,
  xs: Float32Array,
  labels: Int32Array,
  inputDim: number,
  numClasses: number,
  opts: TrainOptions,
): Promise<EpochMetrics[]> {
  const n = labels.length;
  const optimizer =
    (opts.optimizer ?? 'adam') === 'sgd'
      ? tf.train.momentum(opts.learningRate, 0.9)
      : tf.train.adam(opts.learningRate);
  const rng = new Rng(`batches-${opts.seed}`);
  const history: EpochMetrics[] = [];
  const order = Array.from({ length: n }, (_, i) => i);
  const wd = opts.weightDecay ?? 0;
  const kernels = model.trainableWeights.filter((w) => w.name.includes('kernel'));

  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    rng.shuffle(order);
    let lossSum = 0;
    let batches = 0;
    for (let start = 0; start < n; start += opts.batchSize) {
      const idx = order.slice(start, Math.min(start + opts.batchSize, n));
      const batchXs = new Float32Array(idx.length * inputDim);
      const batchLabels = new Int32Array(idx.length);
      idx.forEach((row, r) => {
        batchXs.set(xs.subarray(row * inputDim, (row + 1) * inputDim), r * inputDim);
        batchLabels[r] = labels[row];
      });
      const lossValue = tf.tidy(() => {
        const x = tf.tensor2d(batchXs, [idx.length, inputDim]);
        const y = tf.oneHot(tf.tensor1d(batchLabels, 'int32'), numClasses);
        const loss = optimizer.minimize(() => {
          const logits = model.apply(x, { training: true }) as tf.Tensor;
          const ce = tf.losses.softmaxCrossEntropy(y, logits);
          if (wd === 0) return ce as tf.Scalar;
          const penalty = tf.addN(kernels.map((w) => tf.sum(tf.square(w.read()))));
          return tf.add(ce, tf.mul(wd, penalty)) as tf.Scalar;
        }, true) as tf.Scalar;
        return loss.dataSync()[0];
      });
      if (!Number.isFinite(lossValue)) {
        optimizer.dispose();
        throw new TrainingDivergedError(
          `loss became ${lossValue} at epoch ${epoch}, batch ${batches}`,
        );
      }
      lossSum += lossValue;
      batches++;
    }
    const entry: EpochMetrics = { epoch, meanLoss: lossSum / batches };
    const logged = opts.logEvery && (epoch + 1) % opts.logEvery === 0;
    if (logged || epoch === opts.epochs - 1) {
      entry.trainAccuracy = evaluateAccuracy(model, xs, labels, inputDim);
    }
    history.push(entry);
    if (logged) {
      console.log(
        `epoch ${epoch + 1}/${opts.epochs} loss ${entry.meanLoss.toFixed(4)} acc ${entry.trainAccuracy!.toFixed(4)}`,
      );
    }
    await tf.nextFrame();
  }
  optimizer.dispose();
  return history;
}

/** Plain (unbalanced) accuracy on a sample matrix; a training diagnostic. */
export function evaluateAccuracy(
  model: tf.LayersModel,
  xs: Float32Array,
  labels: Int32Array,
  inputDim: number,
): number {
  return tf.tidy(() => {
    const x = tf.tensor2d(xs, [labels.length, inputDim]);
    const preds = (model.predict(x, { batchSize: 512 }) as tf.Tensor).argMax(1).dataSync();
    let hits = 0;
    for (let i = 0; i < labels.length; i++) {
      if (preds[i] === labels[i]) hits++;
    }
    return hits / labels.length;
  });
}
