/** Typed client for the evaluation-session HTTP API. */
export class ApiError extends Error {
    constructor(status, code, message) {
        super(message ?? `${status} ${code}`);
        this.status = status;
        this.code = code;
    }
}
export class ApiClient {
    constructor(base, sessionId) {
        this.base = base;
        this.sessionId = sessionId;
    }
    url(path) {
        return `${this.base}/api/session/${encodeURIComponent(this.sessionId)}${path}`;
    }
    /** Next unjudged pair for this annotator, or null when the session is drained. */
    async nextPair(annotator) {
        const resp = await fetch(this.url(`/next-pair?annotator=${encodeURIComponent(annotator)}`));
        if (resp.status === 204)
            return null;
        if (!resp.ok) {
            const body = await resp.json().catch(() => ({ error: 'unknown' }));
            throw new ApiError(resp.status, body.error ?? 'unknown', body.message);
        }
        return (await resp.json());
    }
    /**
     * Submit one judgment. A 409 (already judged, e.g. from a second tab)
     * is reported as 'duplicate' so the caller can advance without data loss.
     */
    async submit(pairId, annotator, choice) {
        const resp = await fetch(this.url('/judgment'), {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ pair_id: pairId, annotator, choice }),
        });
        if (resp.status === 201)
            return 'accepted';
        if (resp.status === 409)
            return 'duplicate';
        const body = await resp.json().catch(() => ({ error: 'unknown' }));
        throw new ApiError(resp.status, body.error ?? 'unknown', body.message);
    }
    async results() {
        const resp = await fetch(this.url('/results'));
        if (!resp.ok) {
            const body = await resp.json().catch(() => ({ error: 'unknown' }));
            throw new ApiError(resp.status, body.error ?? 'unknown', body.message);
        }
        return resp.json();
    }
}
