/** Browser entry point: builds the three-viewport page and binds events. */

import { AnnotationApi } from './api';
import { AnnotationApp } from './app';
import { SLOT_KEYS } from './types';

export function buildPage(root: Document): void {
  const viewports = [0, 1, 2]
    .map(
      (i) => `
      <div class="viewport" id="viewport-${i}">
        <div class="stack">
          <img id="slice-img-${i}" alt="slice" draggable="false" />
          <canvas id="overlay-${i}"></canvas>
          <div class="markers" id="markers-${i}"></div>
        </div>
        <div class="vp-controls">
          <span id="slice-label-${i}"></span>
          <input type="range" id="scrub-${i}" min="0" value="0" />
        </div>
      </div>`,
    )
    .join('');
  const slots = SLOT_KEYS.map(
    (s) => `<button id="slot-${s.replace(':', '-')}" data-slot="${s}">${s}</button>`,
  ).join('');
  root.body.innerHTML = `
    <header>
      <select id="study-select"></select>
      <input id="annotator" placeholder="annotator id" />
      <span id="placed-count">0/6</span>
      <span id="dirty-flag"></span>
    </header>
    <nav id="slot-picker">${slots}</nav>
    <main id="viewports">${viewports}</main>
    <footer>
      <button id="save-btn" disabled>Save</button>
      <button id="infer-btn" disabled>Infer</button>
      <button id="overlay-btn">Toggle overlay</button>
      <span>MXA: <b id="mxa-value">n/a</b></span>
      <div id="status-line"></div>
    </footer>`;
}

export function bindEvents(app: AnnotationApp, root: Document): void {
  root.getElementById('study-select')!.addEventListener('change', (ev) => {
    void app.openStudy((ev.target as HTMLSelectElement).value);
  });
  for (const slot of SLOT_KEYS) {
    root
      .getElementById(`slot-${slot.replace(':', '-')}`)!
      .addEventListener('click', () => app.pickSlot(slot));
  }
  [0, 1, 2].forEach((idx) => {
    const stack = root.querySelector(`#viewport-${idx} .stack`) as HTMLElement;
    stack.addEventListener('click', (ev: Event) => {
      const me = ev as MouseEvent;
      const rect = stack.getBoundingClientRect();
      app.clickViewport(idx as 0 | 1 | 2, me.clientX - rect.left, me.clientY - rect.top);
    });
    root.getElementById(`scrub-${idx}`)!.addEventListener('input', (ev) => {
      app.scrub(idx as 0 | 1 | 2, Number((ev.target as HTMLInputElement).value));
    });
  });
  root.addEventListener('keydown', (ev) => {
    const kb = ev as KeyboardEvent;
    if (kb.key === 'ArrowUp') app.stepSlice(0, +1);
    if (kb.key === 'ArrowDown') app.stepSlice(0, -1);
  });
  root.getElementById('save-btn')!.addEventListener('click', () => void app.save());
  root.getElementById('infer-btn')!.addEventListener('click', () => void app.infer());
  root.getElementById('overlay-btn')!.addEventListener('click', () => app.toggleMask());
}

export async function boot(baseUrl: string, root: Document): Promise<AnnotationApp> {
  buildPage(root);
  const app = new AnnotationApp(new AnnotationApi(baseUrl), root);
  bindEvents(app, root);
  await app.start();
  return app;
}

declare global {
  interface Window {
    UGDA_SERVICE_URL?: string;
  }
}
