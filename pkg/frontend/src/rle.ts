/** Run-length mask codec matching the service transport format:
 * z-major flattening (x fastest), alternating run counts starting at 0. */

import { RlePayload } from './types';

export function rleDecode(payload: RlePayload): Uint8Array {
  const [nx, ny, nz] = payload.shape;
  const total = nx * ny * nz;
  if (payload.order !== 'z_major' || payload.first_value !== 0) {
    throw new Error('unsupported RLE layout');
  }
  const sum = payload.counts.reduce((a, b) => a + b, 0);
  if (sum !== total) {
    throw new Error(`RLE counts sum to ${sum}, expected ${total}`);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const count of payload.counts) {
    if (value === 1) out.fill(1, pos, pos + count);
    pos += count;
    value ^= 1;
  }
  return out;
}

export function rleEncode(
  mask: Uint8Array,
  shape: [number, number, number],
): RlePayload {
  const counts: number[] = [];
  let run = 0;
  let value = 0;
  for (let idx = 0; idx < mask.length; idx++) {
    const bit = mask[idx] ? 1 : 0;
    if (bit === value) {
      run += 1;
    } else {
      counts.push(run);
      value = bit;
      run = 1;
    }
  }
  counts.push(run);
  return { shape, order: 'z_major', first_value: 0, counts };
}

/** Flat index of a voxel in the z-major (x fastest) layout. */
export function flatIndex(
  i: number,
  j: number,
  k: number,
  shape: [number, number, number],
): number {
  return i + shape[0] * (j + shape[1] * k);
}
