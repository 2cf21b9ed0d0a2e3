import { beforeEach, describe, expect, it } from 'vitest';

import { LeaderboardView } from '../src/leaderboard.js';
import { FakeArenaApi, makeBattles } from './fake_service.js';

describe('LeaderboardView', () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<div id="board"></div>';
    root = document.getElementById('board')!;
  });

  it('renders the service interval strings verbatim, without recomputing', async () => {
    // rendered deliberately disagrees with elo/plus/minus: the view must
    // display the payload string, proving there is no client-side math
    const api = new FakeArenaApi(makeBattles(2), 1, [
      { system: 'playground-v2', elo: 1125.4, plus: 61.2, minus: 58.6,
        n_battles: 600, rendered: '1125 (+61/-59)' },
      { system: 'flux-dev', elo: 1013.0, plus: 65.0, minus: 78.0,
        n_battles: 600, rendered: 'SERVICE-SAYS-SO' },
    ]);
    const view = new LeaderboardView(root, api);
    await view.refresh();
    const cells = [...root.querySelectorAll('.rendered')]
      .map((c) => c.textContent);
    expect(cells).toEqual(['1125 (+61/-59)', 'SERVICE-SAYS-SO']);
    const systems = [...root.querySelectorAll('.system')]
      .map((c) => c.textContent);
    expect(systems).toEqual(['playground-v2', 'flux-dev']);  // payload order kept
    expect(root.querySelectorAll('.bar')).toHaveLength(2);
  });

  it('shows battle counts and rank numbers', async () => {
    const api = new FakeArenaApi(makeBattles(2), 1, [
      { system: 'a', elo: 1100, plus: 10, minus: 12, n_battles: 42,
        rendered: '1100 (+10/-12)' },
    ]);
    const view = new LeaderboardView(root, api);
    await view.refresh();
    const row = root.querySelector('tbody tr')!;
    expect(row.textContent).toContain('42');
    expect(row.textContent).toContain('1');
  });

  it('reports an empty filter result instead of crashing', async () => {
    const api = new FakeArenaApi(makeBattles(2), 1, []);
    const view = new LeaderboardView(root, api);
    await view.refresh();
    expect(root.querySelector('.board-error')!.textContent)
      .toContain('No leaderboard');
  });
});
