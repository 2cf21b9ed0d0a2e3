/** Blind side-by-side battle view.
 *
 * The assignment payload only ever carries opaque per-assignment image
 * URLs, so nothing rendered here can identify a system before the verdict.
 * Verdict controls stay disabled until both images finish loading. The DOM
 * is rebuilt only when the phase/assignment changes; image-load progress
 * and the definition reveal are updated in place.
 */

import type { Choice } from './api.js';
import { AnnotationSession, KEY_CHOICES } from './session.js';

const CHOICE_LABELS: Array<[Choice, string, string]> = [
  ['Left', '1', 'Left is better'],
  ['Right', '2', 'Right is better'],
  ['Tie', '3', 'Tie'],
  ['BothBad', '4', 'Both bad'],
];

export class BattleView {
  private lastKey = '';

  constructor(private root: HTMLElement, private session: AnnotationSession) {
    session.onChange(() => this.render());
    this.render();
  }

  handleKey(key: string): void {
    const choice = KEY_CHOICES[key];
    if (choice) void this.session.choose(choice);
  }

  private render(): void {
    const s = this.session;
    const key = [s.phase, s.assignment?.assignment_id ?? '-',
                 s.banner?.kind ?? '-'].join('|');
    if (key === this.lastKey) {
      this.syncControls();
      return;
    }
    this.lastKey = key;
    this.rebuild();
  }

  private syncControls(): void {
    const enabled = this.session.canSubmit;
    for (const button of this.root.querySelectorAll<HTMLButtonElement>('.choice')) {
      button.disabled = !enabled;
    }
    const first = this.root.querySelector<HTMLButtonElement>('.choice');
    if (first && enabled && this.root.contains(document.activeElement) === false) {
      first.focus();
    }
  }

  private rebuild(): void {
    const s = this.session;
    if (s.phase === 'loading' || s.phase === 'submitting') {
      this.root.innerHTML = '<p class="status">Working…</p>';
      return;
    }
    if (s.phase === 'error') {
      this.root.innerHTML = `
        <div class="banner ${s.banner?.kind === 'session-expired' ? 'banner-auth' : 'banner-retry'}">
          <span class="banner-text"></span>
          <button id="retry" class="retry-btn">Retry</button>
        </div>`;
      this.root.querySelector('.banner-text')!.textContent =
        s.banner?.message ?? 'Something went wrong.';
      this.root.querySelector('#retry')!.addEventListener('click', () => {
        void s.advance();
      });
      return;
    }
    if (s.phase === 'exhausted') {
      this.root.innerHTML = `
        <div class="done">
          <h2>All battles judged</h2>
          <p class="done-count"></p>
        </div>`;
      this.root.querySelector('.done-count')!.textContent =
        `You submitted ${s.judged} verdicts. Thank you!`;
      return;
    }
    const a = s.assignment!;
    const hasDefinition = a.definition !== null && a.definition !== '';
    this.root.innerHTML = `
      ${s.banner ? '<div class="banner"><span class="banner-text"></span></div>' : ''}
      <div class="progress"></div>
      <h2 class="concept"></h2>
      <div class="definition-row" ${hasDefinition ? '' : 'hidden'}>
        <button id="reveal-def" class="reveal-btn">Show definition</button>
        <p id="definition" class="definition" hidden></p>
      </div>
      <div class="images">
        <figure class="side" data-side="left">
          <div class="skeleton">loading…</div>
          <img alt="left candidate" loading="lazy" hidden>
        </figure>
        <figure class="side" data-side="right">
          <div class="skeleton">loading…</div>
          <img alt="right candidate" loading="lazy" hidden>
        </figure>
      </div>
      <div class="choices" role="group" aria-label="verdict">
        ${CHOICE_LABELS.map(([choice, key, label]) => `
          <button class="choice" data-choice="${choice}" disabled>
            <kbd>${key}</kbd> ${label}
          </button>`).join('')}
      </div>`;

    // user-controlled strings go in as textContent so markup cannot leak
    if (s.banner) {
      this.root.querySelector('.banner-text')!.textContent = s.banner.message;
      this.root.querySelector('.banner')!.classList.add(`banner-${s.banner.kind}`);
    }
    this.root.querySelector('.progress')!.textContent =
      `Battle ${s.judged + 1} of ${s.total}`;
    this.root.querySelector('.concept')!.textContent = a.concept;
    if (hasDefinition) {
      const definition = this.root.querySelector<HTMLElement>('#definition')!;
      const reveal = this.root.querySelector<HTMLElement>('#reveal-def')!;
      definition.textContent = a.definition;
      reveal.addEventListener('click', () => {
        definition.hidden = false;
        reveal.hidden = true;
        s.revealDefinition();
      });
    }

    for (const side of ['left', 'right'] as const) {
      const figure = this.root.querySelector(`.side[data-side="${side}"]`)!;
      const img = figure.querySelector('img')!;
      const skeleton = figure.querySelector<HTMLElement>('.skeleton')!;
      img.addEventListener('load', () => {
        skeleton.hidden = true;
        img.hidden = false;
        this.session.imageLoaded(side);
      });
      img.src = side === 'left' ? a.left_image : a.right_image;
    }

    for (const button of this.root.querySelectorAll<HTMLButtonElement>('.choice')) {
      button.addEventListener('click', () => {
        void s.choose(button.dataset.choice as Choice);
      });
    }
    this.syncControls();
  }
}
