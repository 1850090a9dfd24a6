import { loadConfig } from './config';
import { trainReferenceModel } from './trainReference';

function usage(): never {
  console.error('usage: node dist/cli.js <config.json> <outDir> [--log-every N]');
  process.exit(1);
}

async function main() {
  const args = process.argv.slice(2);
  let logEvery = 10;
  const positional: string[] = [];
  for (let i = 0; i < args.length; i++) {
    if (args[i] === '--log-every') {
      logEvery = Number(args[++i]);
      if (!Number.isInteger(logEvery) || logEvery < 0) usage();
    } else if (args[i].startsWith('-')) {
      usage();
    } else {
      positional.push(args[i]);
    }
  }
  if (positional.length !== 2) usage();

  const cfg = loadConfig(positional[0]);
  console.log('config:', JSON.stringify(cfg));
  const started = Date.now();
  const result = await trainReferenceModel(cfg, positional[1], logEvery || undefined);
  console.log('profile counts:', result.profile.perClassCounts.join(' '));
  console.log('balanced head:', result.balanced.headDir);
  console.log('imbalanced head:', result.imbalanced.headDir);
  console.log(`done in ${((Date.now() - started) / 1000).toFixed(1)}s`);
}

main().catch((err) => {
  console.error(err instanceof Error ? `${err.constructor.name}: ${err.message}` : err);
  process.exit(1);
});
