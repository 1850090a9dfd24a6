import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    // The trend suite trains the paired reference models in beforeAll and
    // drives the analysis CLI per test; both are minutes-scale on CPU.
    testTimeout: 300_000,
    hookTimeout: 1_800_000,
    // Training is single-threaded compute; parallel files would contend.
    fileParallelism: false,
  },
});
