import * as fs from 'fs';

import { z } from 'zod';

const datasetSchema = z.object({
  numClasses: z.number().int().min(2).default(10),
  imageSize: z.number().int().min(1).default(16),
  trainPerClass: z.number().int().min(1).default(600),
  testPerClass: z.number().int().min(1).default(200),
  modesPerClass: z.number().int().min(1).default(8),
  modeMix: z.number().min(0).default(1.3),
  noiseStd: z.number().min(0).default(0.15),
  scaleJitter: z.number().min(0).max(1).default(0.2),
  latentDim: z.number().int().min(0).default(0),
});

const configSchema = z.object({
  seed: z.number().int().default(7),
  dataset: datasetSchema.default({}),
  profile: z
    .object({
      maxRatio: z.number().min(1).default(100),
    })
    .default({}),
  model: z
    .object({
      hidden: z.array(z.number().int().min(1)).default([128]),
      featureDim: z.number().int().min(1).default(64),
    })
    .default({}),
  training: z
    .object({
      epochs: z.number().int().min(1).default(80),
      batchSize: z.number().int().min(1).default(64),
      learningRate: z.number().positive().default(1e-3),
      optimizer: z.enum(['adam', 'sgd']).default('adam'),
      weightDecay: z.number().min(0).default(0),
    })
    .default({}),
});

export type ExporterConfig = z.infer<typeof configSchema>;

export function parseConfig(raw: unknown): ExporterConfig {
  return configSchema.parse(raw);
}

export function loadConfig(filePath: string): ExporterConfig {
  const text = fs.readFileSync(filePath, 'utf-8');
  return parseConfig(JSON.parse(text));
}
