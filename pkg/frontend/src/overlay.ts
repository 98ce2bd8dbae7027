/** Overlay computation: slice bitmaps of the decoded mask and marker
 * placement, kept as pure functions so they are testable without a
 * canvas. */

import { flatIndex } from './rle';
import { planeAxes, pointNearSlice, voxelToScreen } from './transform';
import { AnnotationSession, Axis, SLOT_KEYS, SlotKey, Voxel } from './types';

function axisIndex(axis: Axis): 0 | 1 | 2 {
  return ('xyz'.indexOf(axis)) as 0 | 1 | 2;
}

/** Extract the 2D mask plane for a viewport as a row-major Uint8Array of
 * size width*height, width being the first remaining axis. */
export function maskPlane(
  mask: Uint8Array,
  shape: [number, number, number],
  axis: Axis,
  index: number,
): { width: number; height: number; data: Uint8Array } {
  const { u, v } = planeAxes(axis);
  const width = shape[axisIndex(u)];
  const height = shape[axisIndex(v)];
  const data = new Uint8Array(width * height);
  const coord: [number, number, number] = [0, 0, 0];
  coord[axisIndex(axis)] = index;
  for (let row = 0; row < height; row++) {
    coord[axisIndex(v)] = row;
    for (let col = 0; col < width; col++) {
      coord[axisIndex(u)] = col;
      data[row * width + col] = mask[flatIndex(coord[0], coord[1], coord[2], shape)];
    }
  }
  return { width, height, data };
}

/** Translucent RGBA pixels for a mask plane (blue fill, alpha 96). */
export function planeToRgba(
  plane: { width: number; height: number; data: Uint8Array },
): Uint8ClampedArray<ArrayBuffer> {
  const rgba = new Uint8ClampedArray(new ArrayBuffer(plane.width * plane.height * 4));
  for (let p = 0; p < plane.data.length; p++) {
    if (plane.data[p]) {
      rgba[p * 4 + 0] = 64;
      rgba[p * 4 + 1] = 128;
      rgba[p * 4 + 2] = 255;
      rgba[p * 4 + 3] = 96;
    }
  }
  return rgba;
}

export interface Marker {
  slot: SlotKey;
  x: number;
  y: number;
  onSlice: boolean;
}

/** Screen-space markers for every placed point visible on (or adjacent
 * to) a viewport's current slice. */
export function markersForViewport(
  session: AnnotationSession,
  viewportIdx: 0 | 1 | 2,
): Marker[] {
  const vp = session.viewports[viewportIdx];
  const out: Marker[] = [];
  for (const slot of SLOT_KEYS) {
    const voxel: Voxel | undefined = session.points[slot];
    if (voxel === undefined) continue;
    if (!pointNearSlice(voxel, vp.axis, vp.index, 1)) continue;
    const { x, y } = voxelToScreen(voxel, vp.axis, vp.zoom);
    out.push({
      slot,
      x,
      y,
      onSlice: pointNearSlice(voxel, vp.axis, vp.index, 0),
    });
  }
  return out;
}
