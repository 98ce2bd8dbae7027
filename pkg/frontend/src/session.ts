/** Session state transitions: placing points, slot gating, save/infer
 * readiness.  All functions return a new session object; rendering layers
 * subscribe to the replaced state. */

import { screenToVoxel } from './transform';
import {
  AnnotationSession,
  AnnotationRecord,
  Axis,
  PointPayload,
  SLOT_KEYS,
  SlotKey,
  StudyInfo,
  Voxel,
  slotKey,
} from './types';

export function newSession(study: StudyInfo): AnnotationSession {
  const [nx, ny, nz] = study.shape;
  return {
    studyId: study.study_id,
    shape: study.shape,
    spacingMm: study.spacing_mm,
    points: {},
    activeSlot: 'x:min',
    viewports: [
      { axis: 'z', index: Math.floor(nz / 2), zoom: 6 },
      { axis: 'y', index: Math.floor(ny / 2), zoom: 6 },
      { axis: 'x', index: Math.floor(nx / 2), zoom: 6 },
    ],
    overlayVisible: true,
    dirty: false,
    lastInfer: null,
  };
}

/** Map a click on a viewport to the active slot's voxel.  Clicks outside
 * the image area leave the session unchanged (caller shows a hint).
 * Placing into a filled slot overwrites it (latest wins). */
export function placePoint(
  session: AnnotationSession,
  viewportIdx: 0 | 1 | 2,
  screenX: number,
  screenY: number,
): { session: AnnotationSession; placed: Voxel | null } {
  if (session.activeSlot === null) return { session, placed: null };
  const vp = session.viewports[viewportIdx];
  const voxel = screenToVoxel(
    screenX, screenY, vp.axis, vp.index, session.shape, vp.zoom,
  );
  if (voxel === null) return { session, placed: null };
  const points = { ...session.points, [session.activeSlot]: voxel };
  return {
    session: { ...session, points, dirty: true, lastInfer: session.lastInfer },
    placed: voxel,
  };
}

export function selectSlot(session: AnnotationSession, slot: SlotKey): AnnotationSession {
  return { ...session, activeSlot: slot };
}

export function setSlice(
  session: AnnotationSession,
  viewportIdx: 0 | 1 | 2,
  index: number,
): AnnotationSession {
  const vp = session.viewports[viewportIdx];
  const axisLen = session.shape['xyz'.indexOf(vp.axis)];
  const clamped = Math.min(Math.max(index, 0), axisLen - 1);
  const viewports = session.viewports.map((v, i) =>
    i === viewportIdx ? { ...v, index: clamped } : v,
  ) as AnnotationSession['viewports'];
  return { ...session, viewports };
}

export function toggleOverlay(session: AnnotationSession): AnnotationSession {
  return { ...session, overlayVisible: !session.overlayVisible };
}

export function placedCount(session: AnnotationSession): number {
  return Object.keys(session.points).length;
}

export function allSlotsFilled(session: AnnotationSession): boolean {
  return SLOT_KEYS.every((k) => session.points[k] !== undefined);
}

export function canSave(session: AnnotationSession): boolean {
  return placedCount(session) >= 1;
}

export function canInfer(session: AnnotationSession): boolean {
  return allSlotsFilled(session);
}

export function pointsPayload(session: AnnotationSession): PointPayload[] {
  const out: PointPayload[] = [];
  for (const key of SLOT_KEYS) {
    const voxel = session.points[key];
    if (voxel === undefined) continue;
    const [axis, side] = key.split(':') as [Axis, 'min' | 'max'];
    out.push({ axis, side, ijk: [voxel.i, voxel.j, voxel.k] });
  }
  return out;
}

/** Fold a server record back into the session (after save or refresh). */
export function applyRecord(
  session: AnnotationSession,
  record: AnnotationRecord,
): AnnotationSession {
  const points: AnnotationSession['points'] = {};
  for (const p of record.points) {
    points[slotKey(p.axis, p.side)] = { i: p.ijk[0], j: p.ijk[1], k: p.ijk[2] };
  }
  return { ...session, points, dirty: false };
}

export function markSaved(session: AnnotationSession): AnnotationSession {
  return { ...session, dirty: false };
}
