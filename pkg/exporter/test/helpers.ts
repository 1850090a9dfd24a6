import { execFileSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';

/** Run the analysis CLI and parse its JSON document. */
export function imblens(...args: string[]): any {
  const stdout = execFileSync('imblens', args, { encoding: 'utf-8' });
  return JSON.parse(stdout);
}

/** Run the analysis CLI expecting a nonzero exit; returns { status, stderr }. */
export function imblensFails(...args: string[]): { status: number; stderr: string } {
  try {
    execFileSync('imblens', args, { encoding: 'utf-8', stdio: ['ignore', 'pipe', 'pipe'] });
  } catch (err: any) {
    return { status: err.status, stderr: String(err.stderr) };
  }
  throw new Error(`imblens ${args.join(' ')} unexpectedly succeeded`);
}

export function tmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

/** Flat listing of file name -> content for byte-level comparisons. */
export function dirBytes(dir: string): Record<string, Buffer> {
  const out: Record<string, Buffer> = {};
  const walk = (d: string, rel: string) => {
    for (const entry of fs.readdirSync(d, { withFileTypes: true })) {
      const abs = path.join(d, entry.name);
      const relName = rel ? `${rel}/${entry.name}` : entry.name;
      if (entry.isDirectory()) walk(abs, relName);
      else out[relName] = fs.readFileSync(abs);
    }
  };
  walk(dir, '');
  return out;
}
