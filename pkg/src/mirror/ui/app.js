/**
 * Annotation flow: fetch next pair -> render -> submit choice -> advance.
 *
 * The server is the source of truth: no judgment is held client-side, and a
 * reload resumes at the next unjudged pair. Network failures retry with
 * exponential backoff and a visible status line. Keys 1/2/3 choose
 * A / B / tie.
 */
const KEY_CHOICES = { '1': 'A', '2': 'B', '3': 'tie' };
const MAX_BACKOFF_MS = 8000;
export class AnnotatorApp {
    constructor(root, client, annotator, windowRef = window) {
        this.root = root;
        this.client = client;
        this.annotator = annotator;
        this.windowRef = windowRef;
        this.phase = 'loading';
        this.pair = null;
        this.busy = false;
        this.backoff = 500;
        this.idleResolvers = [];
        this.keyHandler = (ev) => this.onKey(ev);
    }
    async start() {
        this.windowRef.addEventListener('keydown', this.keyHandler);
        await this.advance();
    }
    stop() {
        this.windowRef.removeEventListener('keydown', this.keyHandler);
    }
    /** Resolves once no request is in flight (test hook). */
    whenIdle() {
        if (!this.busy)
            return Promise.resolve();
        return new Promise((resolve) => this.idleResolvers.push(resolve));
    }
    settle() {
        this.busy = false;
        for (const resolve of this.idleResolvers.splice(0))
            resolve();
    }
    async advance() {
        this.busy = true;
        this.phase = 'loading';
        this.render();
        try {
            this.pair = await this.client.nextPair(this.annotator);
            this.backoff = 500;
            this.phase = this.pair === null ? 'done' : 'annotating';
            this.render();
            this.settle();
        }
        catch (err) {
            this.retryLater(err, () => this.advance());
        }
    }
    async choose(choice) {
        if (this.phase !== 'annotating' || this.pair === null || !this.inFlightGuard())
            return;
        const pairId = this.pair.pair_id;
        try {
            // round-trips to the journal before the UI moves on; a duplicate means
            // another tab got there first, so just fetch the next pair
            await this.client.submit(pairId, this.annotator, choice);
            await this.advance();
        }
        catch (err) {
            this.retryLater(err, () => this.advance());
        }
    }
    inFlightGuard() {
        if (this.busy)
            return false;
        this.busy = true;
        return true;
    }
    retryLater(err, action) {
        this.phase = 'error';
        this.render(err instanceof Error ? err.message : String(err));
        const wait = this.backoff;
        this.backoff = Math.min(this.backoff * 2, MAX_BACKOFF_MS);
        this.windowRef.setTimeout(action, wait);
    }
    onKey(ev) {
        const choice = KEY_CHOICES[ev.key];
        if (choice && this.phase === 'annotating') {
            void this.choose(choice);
        }
    }
    render(detail = '') {
        switch (this.phase) {
            case 'loading':
                this.root.innerHTML = `<p class="status" data-phase="loading">loading next pair…</p>`;
                return;
            case 'error':
                this.root.innerHTML = `
          <p class="status error" data-phase="error">
            connection problem, retrying… <span class="detail">${escapeHtml(detail)}</span>
          </p>`;
                return;
            case 'done':
                this.root.innerHTML = `
          <div class="done" data-phase="done">
            <h2>All done</h2>
            <p>No pairs left for <strong>${escapeHtml(this.annotator)}</strong>. Thank you!</p>
          </div>`;
                return;
            case 'annotating':
                this.renderPair(this.pair);
        }
    }
    renderPair(pair) {
        const progress = pair.progress
            ? `<span class="progress">${pair.progress.done} / ${pair.progress.total}</span>`
            : '';
        const context = pair.context
            .map((line, i) => `<p class="turn speaker-${i % 2}">${escapeHtml(line)}</p>`)
            .join('');
        this.root.innerHTML = `
      <div class="pair" data-phase="annotating" data-pair-id="${escapeHtml(pair.pair_id)}">
        <header>
          <h2>Which response is more appropriate?</h2>
          ${progress}
        </header>
        <section class="context"><h3>Dialogue</h3>${context}</section>
        <section class="responses">
          <article class="response">
            <h3>Response A</h3>
            <p>${escapeHtml(pair.response_a)}</p>
          </article>
          <article class="response">
            <h3>Response B</h3>
            <p>${escapeHtml(pair.response_b)}</p>
          </article>
        </section>
        <footer class="choices">
          <button data-choice="A">A is better <kbd>1</kbd></button>
          <button data-choice="B">B is better <kbd>2</kbd></button>
          <button data-choice="tie">Tie <kbd>3</kbd></button>
        </footer>
      </div>`;
        for (const button of this.root.querySelectorAll('button[data-choice]')) {
            button.addEventListener('click', () => {
                void this.choose(button.dataset.choice);
            });
        }
    }
}
function escapeHtml(text) {
    return text
        .replace(/&/g, '&amp;')
        .replace(/</g, '&lt;')
        .replace(/>/g, '&gt;')
        .replace(/"/g, '&quot;');
}
