// The blind-labeling acceptance run: 50 scripted assignments driven through
// the real view, scanning the DOM for system identifiers before every
// verdict, then checking the export for correct side translation.

import { beforeEach, describe, expect, it } from 'vitest';

import type { Choice } from '../src/api.js';
import { BattleView } from '../src/battle.js';
import { AnnotationSession } from '../src/session.js';
import { FakeArenaApi, makeBattles, SYSTEM_NAMES } from './fake_service.js';

const flush = () => new Promise((resolve) => setTimeout(resolve, 0));

function scanForSystemNames(root: HTMLElement): string[] {
  const hits: string[] = [];
  const html = root.innerHTML;
  for (const name of SYSTEM_NAMES) {
    if (html.includes(name)) hits.push(name);
  }
  for (const element of root.querySelectorAll('*')) {
    for (const attr of element.getAttributeNames()) {
      const value = element.getAttribute(attr) ?? '';
      for (const name of SYSTEM_NAMES) {
        if (value.includes(name)) hits.push(`${attr}=${value}`);
      }
    }
  }
  return hits;
}

function fireImageLoads(root: HTMLElement) {
  for (const img of root.querySelectorAll('img')) {
    img.dispatchEvent(new Event('load'));
  }
}

describe('blind labeling acceptance', () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<div id="root"></div>';
    root = document.getElementById('root')!;
  });

  it('50 scripted assignments: no system ids pre-verdict, export translates sides', async () => {
    const api = new FakeArenaApi(makeBattles(50));
    const session = new AnnotationSession(api, 'assessor-1');
    const view = new BattleView(root, session);
    await session.start();
    await flush();

    const keys: string[] = ['1', '2', '3', '4'];
    const scripted: Array<{ battle_id: string; key: string }> = [];
    for (let i = 0; i < 50; i++) {
      expect(session.phase).toBe('viewing');
      const battleId = session.assignment!.battle_id;

      // pre-verdict DOM scan: rendered markup and every attribute value
      expect(scanForSystemNames(root)).toEqual([]);

      fireImageLoads(root);
      await flush();
      expect(scanForSystemNames(root)).toEqual([]);

      const key = keys[i % 4]!;
      scripted.push({ battle_id: battleId, key });
      view.handleKey(key);
      await flush();
      await flush();
    }
    expect(session.phase).toBe('exhausted');

    // every scripted choice must appear in the export, translated through
    // the display order the fake logged for that assignment
    const keyToChoice: Record<string, Choice> = {
      '1': 'Left', '2': 'Right', '3': 'Tie', '4': 'BothBad',
    };
    const exported = (await api.exportVerdicts()).trim().split('\n')
      .map((line) => JSON.parse(line));
    expect(exported).toHaveLength(50);
    const byBattle = new Map(exported.map((v) => [v.battle_id, v]));
    for (const { battle_id, key } of scripted) {
      const verdict = byBattle.get(battle_id);
      expect(verdict).toBeDefined();
      const record = api.verdicts.find((v) => v.battle_id === battle_id)!;
      const choice = keyToChoice[key]!;
      expect(record.choice).toBe(choice);
      if (choice === 'Tie') {
        expect(verdict.outcome).toBe('TIE');
      } else if (choice === 'BothBad') {
        expect(verdict.outcome).toBe('BOTH_BAD');
      } else {
        const expected = (choice === 'Left') === record.left_is_side_a ? 'A' : 'B';
        expect(verdict.outcome).toBe(expected);
      }
    }
    // sanity: the scripted run exercised both display orders
    expect(new Set(api.verdicts.map((v) => v.left_is_side_a)).size).toBe(2);
  });

  it('keyboard 1/2/3/4 produce WinLeft/WinRight/Tie/BothBad verdicts', async () => {
    const api = new FakeArenaApi(makeBattles(4));
    const session = new AnnotationSession(api, 'assessor-2');
    const view = new BattleView(root, session);
    await session.start();
    await flush();
    for (const key of ['1', '2', '3', '4']) {
      fireImageLoads(root);
      await flush();
      view.handleKey(key);
      await flush();
      await flush();
    }
    expect(api.verdicts.map((v) => v.choice)).toEqual(
      ['Left', 'Right', 'Tie', 'BothBad']);
    for (const v of api.verdicts) {
      if (v.choice === 'Left') {
        expect(v.outcome).toBe(v.left_is_side_a ? 'A' : 'B');
      } else if (v.choice === 'Right') {
        expect(v.outcome).toBe(v.left_is_side_a ? 'B' : 'A');
      }
    }
  });

  it('keeps verdict controls disabled until both images load', async () => {
    const api = new FakeArenaApi(makeBattles(2));
    const session = new AnnotationSession(api, 'assessor-3');
    new BattleView(root, session);
    await session.start();
    await flush();
    const buttons = () => [...root.querySelectorAll<HTMLButtonElement>('.choice')];
    expect(buttons().every((b) => b.disabled)).toBe(true);
    expect(root.querySelectorAll('.skeleton[hidden]')).toHaveLength(0);
    root.querySelector('img')!.dispatchEvent(new Event('load'));
    await flush();
    expect(buttons().every((b) => b.disabled)).toBe(true);
    fireImageLoads(root);
    await flush();
    expect(buttons().every((b) => !b.disabled)).toBe(true);
    expect(root.querySelectorAll('.skeleton[hidden]')).toHaveLength(2);
  });

  it('hides the definition behind a toggle and reports the reveal', async () => {
    const api = new FakeArenaApi(makeBattles(2));
    const session = new AnnotationSession(api, 'assessor-4');
    const view = new BattleView(root, session);
    await session.start();
    await flush();
    const definition = root.querySelector<HTMLElement>('#definition')!;
    expect(definition.hidden).toBe(true);
    root.querySelector<HTMLElement>('#reveal-def')!.click();
    expect(definition.hidden).toBe(false);
    expect(definition.textContent).toBe(session.assignment!.definition);
    fireImageLoads(root);
    await flush();
    view.handleKey('3');
    await flush();
    await flush();
    expect(api.verdicts[0]!.definition_opened).toBe(true);
  });

  it('shows the completion screen with the exported count', async () => {
    const api = new FakeArenaApi(makeBattles(1));
    const session = new AnnotationSession(api, 'assessor-5');
    const view = new BattleView(root, session);
    await session.start();
    await flush();
    fireImageLoads(root);
    await flush();
    view.handleKey('1');
    await flush();
    await flush();
    expect(session.phase).toBe('exhausted');
    expect(root.querySelector('.done-count')!.textContent)
      .toContain('1 verdicts');
  });
});
