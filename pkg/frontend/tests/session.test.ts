import { describe, expect, it } from 'vitest';

import {
  allSlotsFilled,
  applyRecord,
  canInfer,
  canSave,
  newSession,
  placePoint,
  placedCount,
  pointsPayload,
  selectSlot,
  setSlice,
} from '../src/session';
import { AnnotationRecord, StudyInfo } from '../src/types';

const STUDY: StudyInfo = {
  study_id: 'tgt_000',
  shape: [64, 64, 24],
  spacing_mm: [1, 1, 2],
  status: 'unannotated',
};

describe('session state', () => {
  it('starts clean with centered viewports', () => {
    const s = newSession(STUDY);
    expect(s.dirty).toBe(false);
    expect(placedCount(s)).toBe(0);
    expect(s.viewports[0]).toEqual({ axis: 'z', index: 12, zoom: 6 });
    expect(canSave(s)).toBe(false);
    expect(canInfer(s)).toBe(false);
  });

  it('places a point through the active slot and sets dirty', () => {
    let s = newSession(STUDY);
    s = selectSlot(s, 'z:min');
    const zoom = s.viewports[0].zoom;
    const res = placePoint(s, 0, 10.5 * zoom, 20.5 * zoom);
    s = res.session;
    expect(res.placed).toEqual({ i: 10, j: 20, k: 12 });
    expect(s.points['z:min']).toEqual({ i: 10, j: 20, k: 12 });
    expect(s.dirty).toBe(true);
  });

  it('ignores clicks outside the image', () => {
    const s = newSession(STUDY);
    const res = placePoint(s, 0, 64 * 6 + 1, 5);
    expect(res.placed).toBeNull();
    expect(res.session.dirty).toBe(false);
  });

  it('latest placement wins for a slot', () => {
    let s = selectSlot(newSession(STUDY), 'x:min');
    s = placePoint(s, 0, 3, 3).session;
    s = selectSlot(s, 'x:min');
    s = placePoint(s, 0, 33, 33).session;
    expect(placedCount(s)).toBe(1);
    expect(s.points['x:min']).toEqual({ i: 5, j: 5, k: 12 });
  });

  it('enables save after one point and infer after six', () => {
    let s = newSession(STUDY);
    const slots = ['x:min', 'x:max', 'y:min', 'y:max', 'z:min', 'z:max'] as const;
    slots.forEach((slot, n) => {
      s = selectSlot(s, slot);
      s = placePoint(s, 0, (n + 1) * 12, (n + 2) * 12).session;
      expect(canSave(s)).toBe(true);
      expect(canInfer(s)).toBe(n === 5);
    });
    expect(allSlotsFilled(s)).toBe(true);
  });

  it('clamps slice scrubbing to bounds', () => {
    let s = newSession(STUDY);
    s = setSlice(s, 0, 99);
    expect(s.viewports[0].index).toBe(23);
    s = setSlice(s, 0, -5);
    expect(s.viewports[0].index).toBe(0);
  });

  it('round-trips a server record and clears dirty', () => {
    let s = selectSlot(newSession(STUDY), 'y:max');
    s = placePoint(s, 0, 8, 8).session;
    const record: AnnotationRecord = {
      study_id: 'tgt_000',
      spacing_mm: [1, 1, 2],
      source: 'human_click',
      points: [
        { axis: 'x', side: 'min', ijk: [1, 30, 12] },
        { axis: 'x', side: 'max', ijk: [60, 30, 12] },
      ],
      annotator: 'alex',
      created: 't0',
      updated: 't1',
      status: 'in_progress',
    };
    s = applyRecord(s, record);
    expect(s.dirty).toBe(false);
    expect(placedCount(s)).toBe(2);
    expect(pointsPayload(s)).toEqual(record.points);
  });
});
