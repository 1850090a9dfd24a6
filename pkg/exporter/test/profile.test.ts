import { describe, expect, it } from 'vitest';

import { exponentialProfile, InsufficientClassDataError, sampleImbalanced } from '../src/profile';

describe('exponentialProfile', () => {
  it('decays from 5000 to 50 at ratio 100 over 10 classes', () => {
    const p = exponentialProfile(10, 100, 5000);
    expect(p.perClassCounts).toEqual([5000, 2997, 1797, 1077, 646, 387, 232, 139, 83, 50]);
  });

  it('ratio 1 keeps every class at the majority count', () => {
    expect(exponentialProfile(5, 1, 7).perClassCounts).toEqual([7, 7, 7, 7, 7]);
  });

  it('two classes at ratio 20 give [n, n/20]', () => {
    expect(exponentialProfile(2, 20, 1000).perClassCounts).toEqual([1000, 50]);
  });

  it('counts are non-increasing and pin the endpoint ratio', () => {
    for (const [c, ratio, majority] of [
      [10, 100, 600],
      [7, 50, 431],
      [3, 2.5, 10],
      [12, 100, 5000],
    ] as const) {
      const counts = exponentialProfile(c, ratio, majority).perClassCounts;
      expect(counts[0]).toBe(majority);
      expect(counts[c - 1]).toBe(Math.round(majority / ratio));
      for (let i = 1; i < c; i++) {
        expect(counts[i]).toBeLessThanOrEqual(counts[i - 1]);
      }
    }
  });

  it('single class only works at ratio 1', () => {
    expect(exponentialProfile(1, 1, 9).perClassCounts).toEqual([9]);
    expect(() => exponentialProfile(1, 2, 9)).toThrow(RangeError);
  });

  it('rejects parameters that would round a class to zero', () => {
    expect(() => exponentialProfile(10, 100, 40)).toThrow(RangeError);
  });

  it('rejects malformed parameters', () => {
    expect(() => exponentialProfile(0, 100, 600)).toThrow(RangeError);
    expect(() => exponentialProfile(10, 0.5, 600)).toThrow(RangeError);
    expect(() => exponentialProfile(10, 100, 0)).toThrow(RangeError);
    expect(() => exponentialProfile(2.5 as any, 100, 600)).toThrow(RangeError);
  });
});

function balancedLabels(numClasses: number, perClass: number): number[] {
  // Interleaved, so per-class indices are spread over the whole range.
  const labels: number[] = [];
  for (let i = 0; i < perClass; i++) {
    for (let c = 0; c < numClasses; c++) labels.push(c);
  }
  return labels;
}

describe('sampleImbalanced', () => {
  const profile = exponentialProfile(4, 10, 100);

  it('realizes the exact per-class counts', () => {
    const labels = balancedLabels(4, 100);
    const picked = sampleImbalanced(labels, profile, 3);
    const tally = [0, 0, 0, 0];
    for (const idx of picked) tally[labels[idx]]++;
    expect(tally).toEqual(profile.perClassCounts);
    expect(picked.length).toBe(profile.perClassCounts.reduce((a, b) => a + b, 0));
  });

  it('returns sorted unique indices', () => {
    const labels = balancedLabels(4, 100);
    const picked = sampleImbalanced(labels, profile, 3);
    for (let i = 1; i < picked.length; i++) {
      expect(picked[i]).toBeGreaterThan(picked[i - 1]);
    }
  });

  it('is deterministic per seed and varies across seeds', () => {
    const labels = balancedLabels(4, 100);
    const a = sampleImbalanced(labels, profile, 11);
    const b = sampleImbalanced(labels, profile, 11);
    const c = sampleImbalanced(labels, profile, 12);
    expect(a).toEqual(b);
    expect(a).not.toEqual(c);
  });

  it('takes everything when availability equals the request', () => {
    const labels = [0, 0, 1];
    const p = exponentialProfile(2, 2, 2);
    expect(sampleImbalanced(labels, p, 0)).toEqual([0, 1, 2]);
  });

  it('raises InsufficientClassData when a class is short', () => {
    const labels = balancedLabels(4, 99);
    expect(() => sampleImbalanced(labels, profile, 0)).toThrow(InsufficientClassDataError);
  });

  it('rejects labels outside the profile range', () => {
    expect(() => sampleImbalanced([0, 4], exponentialProfile(4, 1, 1), 0)).toThrow(RangeError);
  });
});
