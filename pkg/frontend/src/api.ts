/** Typed client for the evaluation-session HTTP API. */

export interface PairView {
  pair_id: string;
  context: string[];
  response_a: string;
  response_b: string;
  progress?: { done: number; total: number };
}

export type Choice = 'A' | 'B' | 'tie';

export type SubmitOutcome = 'accepted' | 'duplicate';

export class ApiError extends Error {
  constructor(public status: number, public code: string, message?: string) {
    super(message ?? `${status} ${code}`);
  }
}

export class ApiClient {
  constructor(private base: string, private sessionId: string) {}

  private url(path: string): string {
    return `${this.base}/api/session/${encodeURIComponent(this.sessionId)}${path}`;
  }

  /** Next unjudged pair for this annotator, or null when the session is drained. */
  async nextPair(annotator: string): Promise<PairView | null> {
    const resp = await fetch(this.url(`/next-pair?annotator=${encodeURIComponent(annotator)}`));
    if (resp.status === 204) return null;
    if (!resp.ok) {
      const body = await resp.json().catch(() => ({ error: 'unknown' }));
      throw new ApiError(resp.status, body.error ?? 'unknown', body.message);
    }
    return (await resp.json()) as PairView;
  }

  /**
   * Submit one judgment. A 409 (already judged, e.g. from a second tab)
   * is reported as 'duplicate' so the caller can advance without data loss.
   */
  async submit(pairId: string, annotator: string, choice: Choice): Promise<SubmitOutcome> {
    const resp = await fetch(this.url('/judgment'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ pair_id: pairId, annotator, choice }),
    });
    if (resp.status === 201) return 'accepted';
    if (resp.status === 409) return 'duplicate';
    const body = await resp.json().catch(() => ({ error: 'unknown' }));
    throw new ApiError(resp.status, body.error ?? 'unknown', body.message);
  }

  async results(): Promise<unknown> {
    const resp = await fetch(this.url('/results'));
    if (!resp.ok) {
      const body = await resp.json().catch(() => ({ error: 'unknown' }));
      throw new ApiError(resp.status, body.error ?? 'unknown', body.message);
    }
    return resp.json();
  }
}
