/** Annotation session state machine, independent of the DOM.
 *
 * Phases: loading -> viewing -> submitting -> (advancing to the next
 * assignment) ... -> exhausted. At most one verdict request is ever in
 * flight; a choice is accepted only while viewing with both images loaded,
 * so duplicate keypresses and clicks before the ack are ignored. A failed
 * submit returns to viewing with the banner set, keeping the choice
 * re-sendable; nothing is ever dropped silently.
 */

import { ApiError } from './api.js';
import type { ArenaApi, Assignment, Choice } from './api.js';

export type Phase = 'loading' | 'viewing' | 'submitting' | 'exhausted' | 'error';

export interface Banner {
  kind: 'retry' | 'session-expired' | 'already-recorded';
  message: string;
}

export class AnnotationSession {
  phase: Phase = 'loading';
  assignment: Assignment | null = null;
  judged = 0;
  total = 0;
  banner: Banner | null = null;
  definitionOpened = false;
  private imagesLoaded = { left: false, right: false };
  private listeners: Array<() => void> = [];

  constructor(private api: ArenaApi, private token: string) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  get imagesReady(): boolean {
    return this.imagesLoaded.left && this.imagesLoaded.right;
  }

  get canSubmit(): boolean {
    return this.phase === 'viewing' && this.imagesReady;
  }

  async start(): Promise<void> {
    await this.advance();
  }

  async advance(): Promise<void> {
    this.phase = 'loading';
    this.assignment = null;
    this.definitionOpened = false;
    this.imagesLoaded = { left: false, right: false };
    this.emit();
    let reply;
    try {
      reply = await this.api.next(this.token);
    } catch (err) {
      this.fail(err);
      return;
    }
    this.judged = reply.progress.judged;
    this.total = reply.progress.total;
    if (reply.exhausted) {
      this.phase = 'exhausted';
    } else {
      this.assignment = reply;
      this.banner = null;
      this.phase = 'viewing';
    }
    this.emit();
  }

  imageLoaded(side: 'left' | 'right'): void {
    this.imagesLoaded[side] = true;
    this.emit();
  }

  revealDefinition(): void {
    this.definitionOpened = true;
    this.emit();
  }

  /** Submit a choice; ignored unless viewing with both images loaded. */
  async choose(choice: Choice): Promise<void> {
    if (!this.canSubmit || this.assignment === null) return;
    this.phase = 'submitting';
    this.banner = null;
    this.emit();
    try {
      await this.api.submitVerdict(this.token, this.assignment.battle_id,
                                   choice, this.definitionOpened);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // someone already recorded this battle for us: move on, with a notice
        await this.advance();
        this.banner = { kind: 'already-recorded',
                        message: 'Verdict already recorded; advancing.' };
        this.emit();
        return;
      }
      if (err instanceof ApiError && err.status === 401) {
        this.phase = 'error';
        this.banner = { kind: 'session-expired', message: 'Session expired.' };
        this.emit();
        return;
      }
      // transport failure or timeout: the choice stays re-sendable
      this.phase = 'viewing';
      this.banner = { kind: 'retry',
                      message: 'Could not reach the server; try again.' };
      this.emit();
      return;
    }
    await this.advance();
  }

  private fail(err: unknown): void {
    if (err instanceof ApiError && err.status === 401) {
      this.phase = 'error';
      this.banner = { kind: 'session-expired', message: 'Session expired.' };
    } else {
      this.phase = 'error';
      this.banner = { kind: 'retry',
                      message: 'Could not reach the server; try again.' };
    }
    this.emit();
  }
}

/** Keyboard layout for verdicts: 1 left, 2 right, 3 tie, 4 both bad. */
export const KEY_CHOICES: Record<string, Choice> = {
  '1': 'Left',
  '2': 'Right',
  '3': 'Tie',
  '4': 'BothBad',
};
