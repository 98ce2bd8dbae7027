import { describe, expect, it } from 'vitest';

import { validatePointsPayload } from '../src/validate';
import { PointPayload } from '../src/types';

const SHAPE: [number, number, number] = [16, 16, 16];

const good: PointPayload[] = [
  { axis: 'x', side: 'min', ijk: [1, 8, 8] },
  { axis: 'x', side: 'max', ijk: [14, 8, 8] },
];

describe('payload validation mirrors server rules', () => {
  it('accepts partial valid payloads', () => {
    expect(validatePointsPayload(good, SHAPE).ok).toBe(true);
  });

  it('rejects empty payloads', () => {
    expect(validatePointsPayload([], SHAPE).ok).toBe(false);
  });

  it('rejects duplicate slots', () => {
    const dup = [good[0], { ...good[1], side: 'min' as const }];
    const res = validatePointsPayload(dup, SHAPE);
    expect(res.ok).toBe(false);
    expect(res.error).toMatch(/duplicate/);
  });

  it('rejects out-of-bounds coordinates', () => {
    const oob = [{ ...good[0], ijk: [16, 0, 0] as [number, number, number] }];
    expect(validatePointsPayload(oob, SHAPE).ok).toBe(false);
  });

  it('rejects non-integer coordinates', () => {
    const frac = [{ ...good[0], ijk: [1.5, 0, 0] as [number, number, number] }];
    expect(validatePointsPayload(frac, SHAPE).ok).toBe(false);
  });
});
