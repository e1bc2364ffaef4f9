/**
 * Start-screen wiring: a small form (session id + annotator name, remembered
 * in localStorage) that hands off to the annotation flow. Split from the
 * entry point so tests can drive it without module side effects.
 */

import { ApiClient } from './api.js';
import { AnnotatorApp } from './app.js';

const STORAGE_KEY = 'annotator-ui';

interface Saved {
  session: string;
  annotator: string;
}

function loadSaved(storage: Storage): Saved {
  try {
    return { session: '', annotator: '', ...JSON.parse(storage.getItem(STORAGE_KEY) ?? '{}') };
  } catch {
    return { session: '', annotator: '' };
  }
}

export function startApp(root: HTMLElement, base: string, session: string, annotator: string): AnnotatorApp {
  const app = new AnnotatorApp(root, new ApiClient(base, session), annotator);
  void app.start();
  return app;
}

export function bootstrap(root: HTMLElement, win: Window = window, base = ''): void {
  const params = new URLSearchParams(win.location.search);
  const session = params.get('session') ?? '';
  const annotator = params.get('annotator') ?? '';
  if (session && annotator) {
    win.localStorage.setItem(STORAGE_KEY, JSON.stringify({ session, annotator }));
    startApp(root, base, session, annotator);
    return;
  }
  renderStart(root, win, base);
}

function renderStart(root: HTMLElement, win: Window, base: string): void {
  const saved = loadSaved(win.localStorage);
  root.innerHTML = `
    <form class="start" id="start-form">
      <h2>Response comparison</h2>
      <label>Session
        <input name="session" required value="${saved.session}" placeholder="session id">
      </label>
      <label>Your name
        <input name="annotator" required value="${saved.annotator}" placeholder="annotator name">
      </label>
      <button type="submit">Start</button>
    </form>`;
  const form = root.querySelector<HTMLFormElement>('#start-form')!;
  form.addEventListener('submit', (ev) => {
    ev.preventDefault();
    const data = new FormData(form);
    const session = String(data.get('session') ?? '').trim();
    const annotator = String(data.get('annotator') ?? '').trim();
    if (!session || !annotator) return;
    win.localStorage.setItem(STORAGE_KEY, JSON.stringify({ session, annotator }));
    startApp(root, base, session, annotator);
  });
}
