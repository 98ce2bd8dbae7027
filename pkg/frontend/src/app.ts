/** Application controller: wires session state, the REST client, and the
 * three orthogonal slice viewports into the DOM.
 *
 * Rendering is split so that everything except actual canvas painting is
 * driveable headlessly: the controller mutates DOM state (status line,
 * MXA read-out, button gating, marker elements) and calls a pluggable
 * `paint` hook for bitmap work.
 */

import { AnnotationApi, ApiError } from './api';
import { maskPlane, markersForViewport, planeToRgba } from './overlay';
import { rleDecode } from './rle';
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
  toggleOverlay,
} from './session';
import { AnnotationSession, SLOT_KEYS, SlotKey, StudyInfo } from './types';
import { validatePointsPayload } from './validate';

export interface PaintHooks {
  /** Draw the base slice image for a viewport. */
  drawSlice(viewportIdx: number, url: string): void;
  /** Draw the translucent mask overlay (RGBA buffer) for a viewport. */
  drawOverlay(viewportIdx: number, width: number, height: number,
              rgba: Uint8ClampedArray<ArrayBuffer> | null): void;
}

const domPaint = (root: Document): PaintHooks => ({
  drawSlice(idx, url) {
    const img = root.getElementById(`slice-img-${idx}`) as HTMLImageElement | null;
    if (img) img.src = url;
  },
  drawOverlay(idx, width, height, rgba) {
    const canvas = root.getElementById(`overlay-${idx}`) as HTMLCanvasElement | null;
    if (!canvas) return;
    const ctx = canvas.getContext('2d');
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (rgba) {
      canvas.width = width;
      canvas.height = height;
      ctx.putImageData(new ImageData(rgba, width, height), 0, 0);
    }
  },
});

export class AnnotationApp {
  session: AnnotationSession | null = null;
  studies: StudyInfo[] = [];
  mask: Uint8Array | null = null;

  constructor(
    private api: AnnotationApi,
    private root: Document,
    private paint: PaintHooks | null = null,
  ) {
    this.paint = paint ?? domPaint(root);
  }

  private el<T extends HTMLElement>(id: string): T {
    const node = this.root.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
  }

  async start(): Promise<void> {
    this.studies = await this.api.listStudies();
    const list = this.el<HTMLSelectElement>('study-select');
    list.innerHTML = '';
    for (const s of this.studies) {
      const opt = this.root.createElement('option');
      opt.value = s.study_id;
      opt.textContent = `${s.study_id} (${s.status})`;
      list.appendChild(opt);
    }
    if (this.studies.length) await this.openStudy(this.studies[0].study_id);
  }

  async openStudy(studyId: string): Promise<void> {
    const study = this.studies.find((s) => s.study_id === studyId);
    if (!study) throw new Error(`unknown study ${studyId}`);
    this.session = newSession(study);
    this.mask = null;
    try {
      const record = await this.api.getPoints(studyId);
      if (record) this.session = applyRecord(this.session, record);
    } catch {
      // no saved annotation is fine
    }
    this.setStatus(`opened ${studyId}`);
    this.renderAll();
  }

  /** Click on a viewport canvas at CSS pixel (x, y). */
  clickViewport(viewportIdx: 0 | 1 | 2, x: number, y: number): void {
    if (!this.session) return;
    const { session, placed } = placePoint(this.session, viewportIdx, x, y);
    this.session = session;
    if (placed === null) {
      this.setStatus('click outside the image area; point ignored');
      return;
    }
    const slot = this.session.activeSlot;
    this.setStatus(`placed ${slot} at (${placed.i}, ${placed.j}, ${placed.k})`);
    this.advanceSlot();
    this.renderAll();
  }

  private advanceSlot(): void {
    if (!this.session) return;
    const empty = SLOT_KEYS.find((k) => this.session!.points[k] === undefined);
    this.session = selectSlot(this.session, empty ?? this.session.activeSlot!);
  }

  pickSlot(slot: SlotKey): void {
    if (!this.session) return;
    this.session = selectSlot(this.session, slot);
    this.renderControls();
  }

  scrub(viewportIdx: 0 | 1 | 2, index: number): void {
    if (!this.session) return;
    this.session = setSlice(this.session, viewportIdx, index);
    this.renderAll();
  }

  stepSlice(viewportIdx: 0 | 1 | 2, delta: number): void {
    if (!this.session) return;
    const vp = this.session.viewports[viewportIdx];
    this.scrub(viewportIdx, vp.index + delta);
  }

  toggleMask(): void {
    if (!this.session) return;
    this.session = toggleOverlay(this.session);
    this.renderOverlays();
  }

  async save(): Promise<void> {
    if (!this.session || !canSave(this.session)) return;
    const payload = pointsPayload(this.session);
    const verdict = validatePointsPayload(payload, this.session.shape);
    if (!verdict.ok) {
      this.setStatus(`not saved: ${verdict.error}`);
      return;
    }
    const annotator = this.el<HTMLInputElement>('annotator').value || 'anonymous';
    try {
      const record = await this.api.putPoints(this.session.studyId, payload, annotator);
      this.session = applyRecord(this.session, record);
      this.setStatus(`saved (${record.status})`);
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        this.setStatus(`rejected by server: ${err.detail}`);
      } else {
        this.setStatus('save failed; points kept locally, retry when online');
      }
    }
    this.renderControls();
  }

  async infer(): Promise<void> {
    if (!this.session || !canInfer(this.session)) return;
    try {
      const res = await this.api.infer(this.session.studyId);
      this.session = { ...this.session, lastInfer: res };
      this.mask = rleDecode(res.rle);
      const mxa = res.mxa_mm === null ? 'n/a' : `${res.mxa_mm.toFixed(2)} mm`;
      this.el('mxa-value').textContent = mxa;
      this.setStatus(
        `inference done (${res.heatmap_source}); review the anchor alignment`,
      );
    } catch (err) {
      if (err instanceof ApiError && err.status === 503) {
        this.setStatus('model not loaded on the server');
      } else {
        this.setStatus('inference failed');
      }
    }
    this.renderAll();
  }

  setStatus(text: string): void {
    this.el('status-line').textContent = text;
  }

  renderAll(): void {
    this.renderViewports();
    this.renderOverlays();
    this.renderControls();
  }

  renderViewports(): void {
    if (!this.session) return;
    this.session.viewports.forEach((vp, idx) => {
      this.paint!.drawSlice(
        idx,
        this.api.sliceUrl(this.session!.studyId, vp.axis, vp.index),
      );
      const axisLen = this.session!.shape['xyz'.indexOf(vp.axis)];
      const img = this.root.getElementById(`slice-img-${idx}`) as HTMLImageElement | null;
      if (img) {
        const rest = 'xyz'.split('').filter((a) => a !== vp.axis);
        img.style.width = `${this.session!.shape['xyz'.indexOf(rest[0])] * vp.zoom}px`;
        img.style.height = `${this.session!.shape['xyz'.indexOf(rest[1])] * vp.zoom}px`;
      }
      const scrub = this.root.getElementById(`scrub-${idx}`) as HTMLInputElement | null;
      if (scrub) {
        scrub.max = String(axisLen - 1);
        scrub.value = String(vp.index);
      }
      const label = this.root.getElementById(`slice-label-${idx}`);
      if (label) label.textContent = `${vp.axis} = ${vp.index}`;
      this.renderMarkers(idx as 0 | 1 | 2);
    });
  }

  private renderMarkers(idx: 0 | 1 | 2): void {
    if (!this.session) return;
    const layer = this.root.getElementById(`markers-${idx}`);
    if (!layer) return;
    layer.innerHTML = '';
    for (const m of markersForViewport(this.session, idx)) {
      const dot = this.root.createElement('div');
      dot.className = `marker ${m.onSlice ? 'on-slice' : 'near-slice'}`;
      dot.dataset.slot = m.slot;
      dot.style.left = `${m.x}px`;
      dot.style.top = `${m.y}px`;
      dot.title = m.slot;
      layer.appendChild(dot);
    }
  }

  renderOverlays(): void {
    if (!this.session) return;
    this.session.viewports.forEach((vp, idx) => {
      if (this.mask && this.session!.overlayVisible) {
        const plane = maskPlane(this.mask, this.session!.shape, vp.axis, vp.index);
        this.paint!.drawOverlay(idx, plane.width, plane.height, planeToRgba(plane));
      } else {
        this.paint!.drawOverlay(idx, 0, 0, null);
      }
    });
  }

  renderControls(): void {
    if (!this.session) return;
    this.el<HTMLButtonElement>('save-btn').disabled = !canSave(this.session);
    this.el<HTMLButtonElement>('infer-btn').disabled = !canInfer(this.session);
    this.el('placed-count').textContent =
      `${placedCount(this.session)}/6${allSlotsFilled(this.session) ? ' complete' : ''}`;
    this.el('dirty-flag').textContent = this.session.dirty ? 'unsaved changes' : '';
    for (const slot of SLOT_KEYS) {
      const btn = this.root.getElementById(`slot-${slot.replace(':', '-')}`);
      if (!btn) continue;
      btn.classList.toggle('active', this.session.activeSlot === slot);
      btn.classList.toggle('filled', this.session.points[slot] !== undefined);
    }
  }
}
