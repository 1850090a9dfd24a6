import * as fs from 'fs';
import * as path from 'path';

/** Tensor payload shape disagrees with the declared geometry. */
export class ShapeMismatchError extends Error {}

export const FORMAT_VERSION = 'embx-1';
export const SPLITS = ['train', 'test', 'other'] as const;
export type Split = (typeof SPLITS)[number];

export interface EmbeddingSetData {
  /** [n, h] row-major. */
  fe: Float32Array;
  h: number;
  labels: Int32Array | number[];
  numClasses: number;
  split: Split;
  /** Optional [n, numClasses] row-major. */
  logits?: Float32Array;
}

export interface ClassifierHeadData {
  /** [numClasses, h] row-major. */
  weights: Float32Array;
  h: number;
  numClasses: number;
  bias?: Float32Array;
}

interface TensorEntry {
  name: string;
  file: string;
  dtype: 'f32' | 'i64';
  shape: number[];
  bytes: Buffer;
}

function f32Bytes(values: Float32Array): Buffer {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    if (!Number.isFinite(values[i])) {
      throw new ShapeMismatchError(`non-finite value at flat index ${i}`);
    }
    buf.writeFloatLE(values[i], i * 4);
  }
  return buf;
}

function i64Bytes(values: Int32Array | number[]): Buffer {
  const buf = Buffer.alloc(values.length * 8);
  for (let i = 0; i < values.length; i++) {
    buf.writeBigInt64LE(BigInt(values[i]), i * 8);
  }
  return buf;
}

function writeDir(
  dir: string,
  tensors: TensorEntry[],
  metadata: Record<string, string>,
): string {
  fs.mkdirSync(dir, { recursive: true });
  for (const t of tensors) {
    fs.writeFileSync(path.join(dir, t.file), t.bytes);
  }
  const manifest = {
    format_version: FORMAT_VERSION,
    tensors: tensors.map((t) => ({
      name: t.name,
      file: t.file,
      dtype: t.dtype,
      shape: t.shape,
      layout: 'row-major',
      byte_order: 'little-endian',
    })),
    metadata,
  };
  // No timestamps: rerunning an export must reproduce every byte.
  fs.writeFileSync(path.join(dir, 'manifest.json'), JSON.stringify(manifest, null, 2) + '\n');
  return dir;
}

export function writeEmbeddingSet(
  dir: string,
  set: EmbeddingSetData,
  extraMetadata: Record<string, string> = {},
): string {
  if (set.h < 1 || set.fe.length % set.h !== 0) {
    throw new ShapeMismatchError(`fe length ${set.fe.length} is not a multiple of h=${set.h}`);
  }
  const n = set.fe.length / set.h;
  if (n < 1) throw new ShapeMismatchError('embedding set must hold at least one row');
  if (set.labels.length !== n) {
    throw new ShapeMismatchError(`labels length ${set.labels.length}, expected ${n}`);
  }
  if (!SPLITS.includes(set.split)) {
    throw new ShapeMismatchError(`split must be one of ${SPLITS.join('/')}, got ${set.split}`);
  }
  for (let i = 0; i < set.labels.length; i++) {
    const label = set.labels[i];
    if (!Number.isInteger(label) || label < 0 || label >= set.numClasses) {
      throw new ShapeMismatchError(`label ${label} at row ${i} outside [0, ${set.numClasses})`);
    }
  }
  const tensors: TensorEntry[] = [
    { name: 'fe', file: 'fe.bin', dtype: 'f32', shape: [n, set.h], bytes: f32Bytes(set.fe) },
    { name: 'labels', file: 'labels.bin', dtype: 'i64', shape: [n], bytes: i64Bytes(set.labels) },
  ];
  if (set.logits) {
    if (set.logits.length !== n * set.numClasses) {
      throw new ShapeMismatchError(
        `logits length ${set.logits.length}, expected ${n * set.numClasses}`,
      );
    }
    tensors.push({
      name: 'logits',
      file: 'logits.bin',
      dtype: 'f32',
      shape: [n, set.numClasses],
      bytes: f32Bytes(set.logits),
    });
  }
  return writeDir(dir, tensors, {
    split: set.split,
    num_classes: String(set.numClasses),
    ...extraMetadata,
  });
}

export function writeClassifierHead(
  dir: string,
  head: ClassifierHeadData,
  extraMetadata: Record<string, string> = {},
): string {
  if (head.weights.length !== head.numClasses * head.h) {
    throw new ShapeMismatchError(
      `weights length ${head.weights.length}, expected ${head.numClasses}*${head.h}`,
    );
  }
  const tensors: TensorEntry[] = [
    {
      name: 'weights',
      file: 'weights.bin',
      dtype: 'f32',
      shape: [head.numClasses, head.h],
      bytes: f32Bytes(head.weights),
    },
  ];
  if (head.bias) {
    if (head.bias.length !== head.numClasses) {
      throw new ShapeMismatchError(`bias length ${head.bias.length}, expected ${head.numClasses}`);
    }
    tensors.push({
      name: 'bias',
      file: 'bias.bin',
      dtype: 'f32',
      shape: [head.numClasses],
      bytes: f32Bytes(head.bias),
    });
  }
  return writeDir(dir, tensors, { num_classes: String(head.numClasses), ...extraMetadata });
}
