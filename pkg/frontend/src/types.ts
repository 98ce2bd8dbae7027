/** Shared protocol and session types for the annotation client. */

export type Axis = 'x' | 'y' | 'z';
export type Side = 'min' | 'max';

export const AXES: Axis[] = ['x', 'y', 'z'];
export const SIDES: Side[] = ['min', 'max'];

/** Slot key in canonical order, e.g. "x:min". */
export type SlotKey = `${Axis}:${Side}`;

export const SLOT_KEYS: SlotKey[] = [
  'x:min', 'x:max', 'y:min', 'y:max', 'z:min', 'z:max',
];

export function slotKey(axis: Axis, side: Side): SlotKey {
  return `${axis}:${side}` as SlotKey;
}

export interface Voxel {
  i: number;
  j: number;
  k: number;
}

export interface StudyInfo {
  study_id: string;
  shape: [number, number, number];
  spacing_mm: [number, number, number];
  status: 'complete' | 'in_progress' | 'unannotated';
}

export interface PointPayload {
  axis: Axis;
  side: Side;
  ijk: [number, number, number];
}

export interface AnnotationRecord {
  study_id: string;
  spacing_mm: number[];
  source: string;
  points: PointPayload[];
  annotator: string;
  created: string;
  updated: string;
  status: 'complete' | 'in_progress';
}

export interface RlePayload {
  shape: [number, number, number];
  order: 'z_major';
  first_value: 0;
  counts: number[];
}

export interface InferResponse {
  study_id: string;
  shape: [number, number, number];
  spacing_mm: number[];
  heatmap_source: 'human_click' | 'predicted';
  rle: RlePayload;
  mxa_mm: number | null;
  empty_prediction: boolean;
}

/** One orthogonal viewport's navigation state. */
export interface ViewportState {
  axis: Axis;
  index: number;
  zoom: number;
}

/** Client-side annotation session; all rendered state derives from this
 * plus the last server responses, so a refresh can rebuild the page. */
export interface AnnotationSession {
  studyId: string;
  shape: [number, number, number];
  spacingMm: [number, number, number];
  points: Partial<Record<SlotKey, Voxel>>;
  activeSlot: SlotKey | null;
  viewports: [ViewportState, ViewportState, ViewportState];
  overlayVisible: boolean;
  dirty: boolean;
  lastInfer: InferResponse | null;
}
