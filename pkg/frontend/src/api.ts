/** Typed client for the annotation service's /api endpoints. */

export interface Progress {
  judged: number;
  total: number;
}

export interface Assignment {
  exhausted: false;
  assignment_id: string;
  battle_id: string;
  concept: string;
  definition: string | null;
  left_image: string;
  right_image: string;
  progress: Progress;
}

export interface ExhaustedReply {
  exhausted: true;
  progress: Progress;
}

export type NextReply = Assignment | ExhaustedReply;

export type Choice = 'Left' | 'Right' | 'Tie' | 'BothBad';

export interface VerdictAck {
  ok: boolean;
  outcome: string;
}

export interface LeaderboardRow {
  system: string;
  elo: number;
  plus: number;
  minus: number;
  n_battles: number;
  rendered: string;
}

export interface LeaderboardFilters {
  subset?: string;
  variant?: string;
  judge?: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export interface ArenaApi {
  next(token: string): Promise<NextReply>;
  submitVerdict(token: string, battleId: string, choice: Choice,
                definitionOpened: boolean): Promise<VerdictAck>;
  leaderboard(filters: LeaderboardFilters): Promise<LeaderboardRow[]>;
  exportVerdicts(): Promise<string>;
}

type FetchLike = typeof fetch;

export class HttpArenaApi implements ArenaApi {
  constructor(private base = '', private fetchFn: FetchLike = fetch.bind(globalThis)) {}

  private async checked(response: Response): Promise<Response> {
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  async next(token: string): Promise<NextReply> {
    const url = `${this.base}/api/next?annotator=${encodeURIComponent(token)}`;
    const response = await this.checked(await this.fetchFn(url));
    return response.json();
  }

  async submitVerdict(token: string, battleId: string, choice: Choice,
                      definitionOpened: boolean): Promise<VerdictAck> {
    const response = await this.checked(await this.fetchFn(`${this.base}/api/verdict`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({
        battle_id: battleId,
        annotator: token,
        choice,
        definition_opened: definitionOpened,
      }),
    }));
    return response.json();
  }

  async leaderboard(filters: LeaderboardFilters): Promise<LeaderboardRow[]> {
    const params = new URLSearchParams();
    if (filters.subset) params.set('subset', filters.subset);
    if (filters.variant) params.set('variant', filters.variant);
    if (filters.judge) params.set('judge', filters.judge);
    const suffix = params.toString() ? `?${params}` : '';
    const response = await this.checked(
      await this.fetchFn(`${this.base}/api/leaderboard${suffix}`));
    const body = await response.json();
    return body.rows as LeaderboardRow[];
  }

  async exportVerdicts(): Promise<string> {
    const response = await this.checked(
      await this.fetchFn(`${this.base}/api/export?format=verdict-jsonl`));
    return response.text();
  }
}
