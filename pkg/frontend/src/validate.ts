/** Cross-boundary validation: hand exported files to the primary toolkit.
 *
 * Captions are checked by shelling the primary CLI's `mine` subcommand,
 * which parses and fully validates the JSONL schema.  The primary CLI has
 * no feature-file subcommand, so features are checked by invoking the
 * primary package's ingest function through the Python interpreter.
 */

import { spawnSync } from 'child_process';
import { mkdtempSync, rmSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';

export interface ValidationOutcome {
  ok: boolean;
  stderr: string;
}

export function validateCaptionsWithPrimary(captionsPath: string): ValidationOutcome {
  const scratch = mkdtempSync(join(tmpdir(), 'adapter-validate-'));
  try {
    const result = spawnSync(
      'scene-robust',
      ['mine', '--captions', captionsPath, '--out', join(scratch, 'stats.bin')],
      { encoding: 'utf-8' },
    );
    return { ok: result.status === 0, stderr: result.stderr ?? '' };
  } finally {
    rmSync(scratch, { recursive: true, force: true });
  }
}

export function validateFeaturesWithPrimary(featuresPath: string): ValidationOutcome {
  const script =
    'import sys; from scene_robust.fusion import ingest_features; ' +
    'fs = ingest_features(sys.argv[1]); print(len(fs))';
  const result = spawnSync('python3', ['-c', script, featuresPath], { encoding: 'utf-8' });
  return { ok: result.status === 0, stderr: result.stderr ?? '' };
}
