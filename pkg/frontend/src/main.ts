/** Entry point: token handling, tab switching, global keyboard map. */

import { HttpArenaApi } from './api.js';
import { BattleView } from './battle.js';
import { LeaderboardView } from './leaderboard.js';
import { AnnotationSession } from './session.js';

function requireToken(): string {
  let token = localStorage.getItem('annotator_token');
  if (!token) {
    token = window.prompt('Annotator token:') ?? '';
    localStorage.setItem('annotator_token', token);
  }
  return token;
}

export function boot(root: HTMLElement): void {
  const api = new HttpArenaApi();
  const token = requireToken();

  root.innerHTML = `
    <nav class="tabs">
      <button id="tab-annotate" class="tab active">Annotate</button>
      <button id="tab-board" class="tab">Leaderboard</button>
    </nav>
    <main id="annotate-pane"></main>
    <main id="board-pane" hidden></main>`;

  const annotatePane = root.querySelector<HTMLElement>('#annotate-pane')!;
  const boardPane = root.querySelector<HTMLElement>('#board-pane')!;
  const session = new AnnotationSession(api, token);
  const battle = new BattleView(annotatePane, session);
  const board = new LeaderboardView(boardPane, api);

  root.querySelector('#tab-annotate')!.addEventListener('click', () => {
    annotatePane.hidden = false;
    boardPane.hidden = true;
  });
  root.querySelector('#tab-board')!.addEventListener('click', () => {
    annotatePane.hidden = true;
    boardPane.hidden = false;
    void board.refresh();
  });

  document.addEventListener('keydown', (event) => {
    if (!annotatePane.hidden && !(event.target instanceof HTMLInputElement)) {
      battle.handleKey(event.key);
    }
  });

  void session.start();
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  boot(document.getElementById('app')!);
}
