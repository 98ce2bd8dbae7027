/** Client-side payload validation mirroring the server's rules, so the UI
 * never submits a schema-violating request. */

import { AXES, PointPayload, SIDES } from './types';

export interface ValidationResult {
  ok: boolean;
  error?: string;
}

export function validatePointsPayload(
  points: PointPayload[],
  shape: [number, number, number],
): ValidationResult {
  if (points.length < 1) return { ok: false, error: 'no points placed' };
  if (points.length > 6) return { ok: false, error: 'more than six points' };
  const seen = new Set<string>();
  for (const p of points) {
    if (!AXES.includes(p.axis) || !SIDES.includes(p.side)) {
      return { ok: false, error: `unknown slot (${p.axis}, ${p.side})` };
    }
    const key = `${p.axis}:${p.side}`;
    if (seen.has(key)) return { ok: false, error: `duplicate slot ${key}` };
    seen.add(key);
    if (p.ijk.length !== 3 || p.ijk.some((c) => !Number.isInteger(c))) {
      return { ok: false, error: `non-integer coordinate in ${key}` };
    }
    for (let d = 0; d < 3; d++) {
      if (p.ijk[d] < 0 || p.ijk[d] >= shape[d]) {
        return { ok: false, error: `point ${key} outside the study grid` };
      }
    }
  }
  return { ok: true };
}
