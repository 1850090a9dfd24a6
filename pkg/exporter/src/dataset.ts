import { Rng } from './rng';

export interface DatasetSpec {
  numClasses: number;
  /** Images are imageSize x imageSize single-channel, flattened row-major. */
  imageSize: number;
  trainPerClass: number;
  testPerClass: number;
  /**
   * Shared mode templates; every class renders each template with its own
   * offset, so one class's samples spread over modesPerClass distinct
   * directions while the same template links it to every other class.
   */
  modesPerClass: number;
  /**
   * How far a class's rendition of each template drifts from the template,
   * relative to the template's unit norm. Same-template renditions of two
   * classes correlate at roughly 1 / (1 + modeMix^2): small values make
   * classes nearly indistinguishable, large values make them trivial.
   */
  modeMix: number;
  /** Per-pixel gaussian noise. */
  noiseStd: number;
  /** Multiplicative intensity jitter: scale in [1 - j, 1 + j]. */
  scaleJitter: number;
  /**
   * Dimension of the shared subspace all cores and mode drifts are drawn
   * from; 0 draws them in the full pixel space. When it is smaller than
   * numClasses * modesPerClass the class patterns must overlap, so no single
   * linear unit can respond to all of one class's modes without also picking
   * up other classes.
   */
  latentDim: number;
  seed: number;
}

export interface Dataset {
  spec: DatasetSpec;
  dim: number;
  xsTrain: Float32Array;
  labelsTrain: Int32Array;
  xsTest: Float32Array;
  labelsTest: Int32Array;
}

function unitVector(rng: Rng, dim: number): Float64Array {
  const v = new Float64Array(dim);
  let norm = 0;
  for (let i = 0; i < dim; i++) {
    v[i] = rng.gauss();
    norm += v[i] * v[i];
  }
  norm = Math.sqrt(norm);
  for (let i = 0; i < dim; i++) v[i] /= norm;
  return v;
}

function orthonormalBasis(rng: Rng, count: number, dim: number): Float64Array[] {
  const basis: Float64Array[] = [];
  while (basis.length < count) {
    const v = new Float64Array(dim);
    for (let i = 0; i < dim; i++) v[i] = rng.gauss();
    for (const b of basis) {
      let dot = 0;
      for (let i = 0; i < dim; i++) dot += v[i] * b[i];
      for (let i = 0; i < dim; i++) v[i] -= dot * b[i];
    }
    let norm = 0;
    for (let i = 0; i < dim; i++) norm += v[i] * v[i];
    norm = Math.sqrt(norm);
    for (let i = 0; i < dim; i++) v[i] /= norm;
    basis.push(v);
  }
  return basis;
}

/**
 * Synthetic grayscale classification set. A pool of shared unit-norm mode
 * templates spans the data; each class renders every template with a private
 * offset, and every sample is a jittered, noisy rendition of one of its
 * class's modes. Class identity therefore never collapses into a single
 * direction: telling classes apart means telling their renditions of the
 * same template apart. Balanced across classes; fully determined by seed.
 */
export function makeDataset(spec: DatasetSpec): Dataset {
  const dim = spec.imageSize * spec.imageSize;
  if (spec.latentDim < 0 || spec.latentDim > dim) {
    throw new RangeError(`latentDim must be in [0, ${dim}], got ${spec.latentDim}`);
  }
  const protoRng = new Rng(`protos-${spec.seed}`);
  const basis =
    spec.latentDim > 0 ? orthonormalBasis(protoRng, spec.latentDim, dim) : null;
  const drawDirection = (): Float64Array => {
    if (basis === null) return unitVector(protoRng, dim);
    const z = unitVector(protoRng, basis.length);
    const v = new Float64Array(dim);
    for (let k = 0; k < basis.length; k++) {
      for (let i = 0; i < dim; i++) v[i] += z[k] * basis[k][i];
    }
    return v; // Orthonormal basis, unit coefficients: still unit norm.
  };
  const templates: Float64Array[] = [];
  for (let m = 0; m < spec.modesPerClass; m++) templates.push(drawDirection());
  const prototypes: Float64Array[][] = [];
  for (let c = 0; c < spec.numClasses; c++) {
    const modes: Float64Array[] = [];
    for (let m = 0; m < spec.modesPerClass; m++) {
      const offset = drawDirection();
      const proto = new Float64Array(dim);
      let norm = 0;
      for (let i = 0; i < dim; i++) {
        proto[i] = templates[m][i] + spec.modeMix * offset[i];
        norm += proto[i] * proto[i];
      }
      norm = Math.sqrt(norm);
      for (let i = 0; i < dim; i++) proto[i] /= norm;
      modes.push(proto);
    }
    prototypes.push(modes);
  }

  const render = (rngName: string, perClass: number) => {
    const rng = new Rng(rngName);
    const n = perClass * spec.numClasses;
    const xs = new Float32Array(n * dim);
    const labels = new Int32Array(n);
    let row = 0;
    for (let c = 0; c < spec.numClasses; c++) {
      for (let s = 0; s < perClass; s++) {
        const proto = prototypes[c][rng.int(spec.modesPerClass)];
        const scale = rng.range(1 - spec.scaleJitter, 1 + spec.scaleJitter);
        const base = row * dim;
        for (let i = 0; i < dim; i++) {
          xs[base + i] = scale * proto[i] + spec.noiseStd * rng.gauss();
        }
        labels[row] = c;
        row++;
      }
    }
    return { xs, labels };
  };

  const train = render(`train-${spec.seed}`, spec.trainPerClass);
  const test = render(`test-${spec.seed}`, spec.testPerClass);
  return {
    spec,
    dim,
    xsTrain: train.xs,
    labelsTrain: train.labels,
    xsTest: test.xs,
    labelsTest: test.labels,
  };
}

/** Row-subset of a sample matrix, e.g. for imbalanced training subsets. */
export function takeRows(
  xs: Float32Array,
  labels: Int32Array,
  dim: number,
  indices: number[],
): { xs: Float32Array; labels: Int32Array } {
  const out = new Float32Array(indices.length * dim);
  const outLabels = new Int32Array(indices.length);
  for (let r = 0; r < indices.length; r++) {
    out.set(xs.subarray(indices[r] * dim, (indices[r] + 1) * dim), r * dim);
    outLabels[r] = labels[indices[r]];
  }
  return { xs: out, labels: outLabels };
}
