/** Viewport geometry: mapping between screen pixels and voxel coordinates.
 *
 * A slice along `axis` shows the two remaining axes in (x, y, z) order:
 * the first on the image width, the second on the height (matching the
 * service's PNG orientation).  Zoom scales voxels to screen pixels with
 * voxel (0, 0) of the plane at screen (0, 0).
 */

import { AXES, Axis, Voxel } from './types';

export interface PlaneAxes {
  /** axis shown on the image width */
  u: Axis;
  /** axis shown on the image height */
  v: Axis;
}

export function planeAxes(axis: Axis): PlaneAxes {
  const rest = AXES.filter((a) => a !== axis);
  return { u: rest[0], v: rest[1] };
}

function axisIndex(axis: Axis): 0 | 1 | 2 {
  return AXES.indexOf(axis) as 0 | 1 | 2;
}

export function voxelComponent(voxel: Voxel, axis: Axis): number {
  return axis === 'x' ? voxel.i : axis === 'y' ? voxel.j : voxel.k;
}

function withComponent(voxel: Voxel, axis: Axis, value: number): Voxel {
  const out = { ...voxel };
  if (axis === 'x') out.i = value;
  else if (axis === 'y') out.j = value;
  else out.k = value;
  return out;
}

/** Screen pixel (relative to the viewport canvas) for an in-plane voxel.
 * Returns the center of the voxel's zoomed cell. */
export function voxelToScreen(
  voxel: Voxel,
  axis: Axis,
  zoom: number,
): { x: number; y: number } {
  const { u, v } = planeAxes(axis);
  return {
    x: (voxelComponent(voxel, u) + 0.5) * zoom,
    y: (voxelComponent(voxel, v) + 0.5) * zoom,
  };
}

/** Voxel under a screen click on a slice viewport, or null outside the
 * image area.  Exact inverse of voxelToScreen for in-bounds voxels at any
 * zoom > 0. */
export function screenToVoxel(
  x: number,
  y: number,
  axis: Axis,
  sliceIndex: number,
  shape: [number, number, number],
  zoom: number,
): Voxel | null {
  const { u, v } = planeAxes(axis);
  const uIdx = Math.floor(x / zoom);
  const vIdx = Math.floor(y / zoom);
  const uMax = shape[axisIndex(u)];
  const vMax = shape[axisIndex(v)];
  if (uIdx < 0 || uIdx >= uMax || vIdx < 0 || vIdx >= vMax) return null;
  if (sliceIndex < 0 || sliceIndex >= shape[axisIndex(axis)]) return null;
  let voxel: Voxel = { i: 0, j: 0, k: 0 };
  voxel = withComponent(voxel, axis, sliceIndex);
  voxel = withComponent(voxel, u, uIdx);
  voxel = withComponent(voxel, v, vIdx);
  return voxel;
}

/** Whether a point should be marked on a viewport's current slice: the
 * slice contains the point or lies within `halo` slices of it. */
export function pointNearSlice(
  voxel: Voxel,
  axis: Axis,
  sliceIndex: number,
  halo = 1,
): boolean {
  return Math.abs(voxelComponent(voxel, axis) - sliceIndex) <= halo;
}
