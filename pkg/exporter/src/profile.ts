import { Rng } from './rng';

/** Requested per-class count exceeds what the dataset holds. */
export class InsufficientClassDataError extends Error {}

/**
 * Per-class training counts decaying geometrically from the majority count
 * down to majorityCount / maxRatio.
 */
export interface ImbalanceProfile {
  numClasses: number;
  maxRatio: number;
  perClassCounts: number[];
}

/**
 * counts[i] = round(majorityCount * maxRatio^(-i / (C - 1))).
 *
 * The endpoints pin the invariant: counts[0] is the majority count and
 * counts[C-1] is majorityCount / maxRatio up to integer rounding.
 */
export function exponentialProfile(
  numClasses: number,
  maxRatio: number,
  majorityCount: number,
): ImbalanceProfile {
  if (!Number.isInteger(numClasses) || numClasses < 1) {
    throw new RangeError(`numClasses must be a positive integer, got ${numClasses}`);
  }
  if (!(maxRatio >= 1)) {
    throw new RangeError(`maxRatio must be >= 1, got ${maxRatio}`);
  }
  if (!Number.isInteger(majorityCount) || majorityCount < 1) {
    throw new RangeError(`majorityCount must be a positive integer, got ${majorityCount}`);
  }
  if (numClasses === 1 && maxRatio !== 1) {
    throw new RangeError('a single class cannot realize a ratio above 1');
  }
  if (Math.round(majorityCount / maxRatio) < 1) {
    throw new RangeError(
      `majorityCount ${majorityCount} too small for maxRatio ${maxRatio}: minority would round to 0`,
    );
  }
  const counts: number[] = [];
  for (let i = 0; i < numClasses; i++) {
    const exponent = numClasses === 1 ? 0 : -i / (numClasses - 1);
    counts.push(Math.round(majorityCount * Math.pow(maxRatio, exponent)));
  }
  for (let i = 1; i < numClasses; i++) {
    if (counts[i] > counts[i - 1]) {
      throw new RangeError(`counts must be non-increasing, got ${counts}`);
    }
  }
  return { numClasses, maxRatio, perClassCounts: counts };
}

/**
 * Pick a deterministic subset of instance indices realizing the profile.
 *
 * Within each class the available indices are shuffled by a stream seeded
 * from (seed, class), so the same arguments always select the same subset.
 * Returned indices are sorted ascending.
 */
export function sampleImbalanced(
  labels: ArrayLike<number>,
  profile: ImbalanceProfile,
  seed: number,
): number[] {
  const perClass: number[][] = [];
  for (let c = 0; c < profile.numClasses; c++) perClass.push([]);
  for (let i = 0; i < labels.length; i++) {
    const label = labels[i];
    if (!Number.isInteger(label) || label < 0 || label >= profile.numClasses) {
      throw new RangeError(`label ${label} at index ${i} outside [0, ${profile.numClasses})`);
    }
    perClass[label].push(i);
  }
  const chosen: number[] = [];
  for (let c = 0; c < profile.numClasses; c++) {
    const want = profile.perClassCounts[c];
    const have = perClass[c].length;
    if (have < want) {
      throw new InsufficientClassDataError(
        `class ${c}: need ${want} instances but only ${have} available`,
      );
    }
    const rng = new Rng(`sample-${seed}-${c}`);
    rng.shuffle(perClass[c]);
    for (let j = 0; j < want; j++) chosen.push(perClass[c][j]);
  }
  chosen.sort((a, b) => a - b);
  return chosen;
}
