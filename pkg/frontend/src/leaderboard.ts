/** Live leaderboard with confidence-interval bars.
 *
 * Intervals are displayed exactly as the service rendered them; the only
 * client-side arithmetic is the pixel scaling of the bars.
 */

import type { ArenaApi, LeaderboardRow } from './api.js';

export class LeaderboardView {
  constructor(private root: HTMLElement, private api: ArenaApi) {}

  async refresh(): Promise<void> {
    const subset = this.inputValue('#filter-subset');
    const variant = this.inputValue('#filter-variant');
    const judge = this.inputValue('#filter-judge');
    this.renderShell(subset, variant, judge);
    const body = this.root.querySelector<HTMLElement>('.board-body')!;
    let rows: LeaderboardRow[];
    try {
      rows = await this.api.leaderboard({ subset, variant, judge });
    } catch (err) {
      body.innerHTML = '<p class="status board-error"></p>';
      body.querySelector('.board-error')!.textContent =
        'No leaderboard for this filter yet.';
      return;
    }
    this.renderRows(body, rows);
  }

  private inputValue(selector: string): string | undefined {
    const value = this.root.querySelector<HTMLInputElement>(selector)?.value.trim();
    return value ? value : undefined;
  }

  private renderShell(subset?: string, variant?: string, judge?: string): void {
    if (this.root.querySelector('.board-body')) return;
    this.root.innerHTML = `
      <form class="filters">
        <input id="filter-subset" placeholder="subset" value="${subset ?? ''}">
        <input id="filter-variant" placeholder="variant" value="${variant ?? ''}">
        <input id="filter-judge" placeholder="judge" value="${judge ?? ''}">
        <button type="submit">Apply</button>
      </form>
      <div class="board-body"></div>`;
    this.root.querySelector('.filters')!.addEventListener('submit', (event) => {
      event.preventDefault();
      void this.refresh();
    });
  }

  private renderRows(body: HTMLElement, rows: LeaderboardRow[]): void {
    const maxSpread = Math.max(1, ...rows.map((r) => r.plus + r.minus));
    body.innerHTML = `
      <table class="board">
        <thead><tr>
          <th>#</th><th>system</th><th>rating</th><th>95% interval</th><th>battles</th>
        </tr></thead>
        <tbody>
          ${rows.map((row, i) => `
            <tr>
              <td>${i + 1}</td>
              <td class="system"></td>
              <td class="rendered"></td>
              <td class="bar-cell">
                <div class="bar" style="margin-left:${this.pct(row.minus, maxSpread)}%;
                     width:${this.pct(row.plus + row.minus, maxSpread, 2)}%"></div>
              </td>
              <td>${row.n_battles}</td>
            </tr>`).join('')}
        </tbody>
      </table>`;
    const systemCells = body.querySelectorAll('.system');
    const renderedCells = body.querySelectorAll('.rendered');
    rows.forEach((row, i) => {
      systemCells[i]!.textContent = row.system;
      renderedCells[i]!.textContent = row.rendered;  // verbatim service string
    });
  }

  private pct(value: number, scale: number, min = 0): number {
    return Math.max(min, Math.round((value / scale) * 50));
  }
}
