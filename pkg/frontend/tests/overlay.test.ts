import { describe, expect, it } from 'vitest';

import { maskPlane, markersForViewport, planeToRgba } from '../src/overlay';
import { flatIndex } from '../src/rle';
import { newSession } from '../src/session';
import { StudyInfo } from '../src/types';

const SHAPE: [number, number, number] = [4, 3, 2];

describe('maskPlane', () => {
  it('extracts the axial plane with width = x', () => {
    const mask = new Uint8Array(4 * 3 * 2);
    mask[flatIndex(2, 1, 1, SHAPE)] = 1;
    const plane = maskPlane(mask, SHAPE, 'z', 1);
    expect(plane.width).toBe(4);
    expect(plane.height).toBe(3);
    expect(plane.data[1 * 4 + 2]).toBe(1);
    expect([...plane.data].reduce((a, b) => a + b, 0)).toBe(1);
  });

  it('extracts sagittal planes with width = y', () => {
    const mask = new Uint8Array(4 * 3 * 2);
    mask[flatIndex(3, 2, 0, SHAPE)] = 1;
    const plane = maskPlane(mask, SHAPE, 'x', 3);
    expect(plane.width).toBe(3);
    expect(plane.height).toBe(2);
    expect(plane.data[0 * 3 + 2]).toBe(1);
  });

  it('renders translucent RGBA for foreground only', () => {
    const plane = { width: 2, height: 1, data: Uint8Array.from([0, 1]) };
    const rgba = planeToRgba(plane);
    expect(rgba[3]).toBe(0);
    expect(rgba[7]).toBe(96);
  });
});

describe('markersForViewport', () => {
  const study: StudyInfo = {
    study_id: 's',
    shape: [64, 64, 24],
    spacing_mm: [1, 1, 2],
    status: 'unannotated',
  };

  it('shows points on or near the current slice with screen coords', () => {
    let session = newSession(study); // axial viewport at k=12, zoom 6
    session = {
      ...session,
      points: {
        'x:min': { i: 4, j: 8, k: 12 },
        'x:max': { i: 60, j: 8, k: 13 },
        'y:min': { i: 30, j: 2, k: 20 },
      },
    };
    const markers = markersForViewport(session, 0);
    const slots = markers.map((m) => m.slot).sort();
    expect(slots).toEqual(['x:max', 'x:min']);
    const onSlice = markers.find((m) => m.slot === 'x:min')!;
    expect(onSlice.onSlice).toBe(true);
    expect(onSlice.x).toBeCloseTo((4 + 0.5) * 6);
    expect(onSlice.y).toBeCloseTo((8 + 0.5) * 6);
    expect(markers.find((m) => m.slot === 'x:max')!.onSlice).toBe(false);
  });
});
