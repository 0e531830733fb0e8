// The annotation screen: a create form, then a keyboard-driven labeling
// loop against one session. Rendering is a full rebuild of the active
// screen; clicks are delegated from the root so rebuilt nodes need no
// re-wiring. All server state arrives through the five JSON endpoints.

import { Api, ApiError, StatusView } from './api.js';
import { BatchLabeler } from './labeling.js';

export interface AppOptions {
  /** Status/batch poll cadence in ms; tests crank this down. */
  pollMs?: number;
}

export interface AppHandle {
  stop(): void;
}

const TERMINAL = new Set(['stopped', 'completed', 'failed']);

const KEY_HINTS =
  'p: label +1 &nbsp; n: label −1 &nbsp; j/k: move &nbsp; u: clear &nbsp; Enter: submit';

export function mountApp(root: HTMLElement, api: Api, options: AppOptions = {}): AppHandle {
  const pollMs = options.pollMs ?? 1500;
  const labeler = new BatchLabeler();

  let sessionId: string | null = null;
  let threshold = 0.99; // display context for agreement chips; server enforces its own
  let status: StatusView | null = null;
  let stale = false;
  let notice = '';
  let errorText = '';
  let busy = false;
  let exportText = '';

  renderCreateScreen();

  const timer = setInterval(() => {
    void poll();
  }, pollMs);

  function onKeydown(event: KeyboardEvent): void {
    if (sessionId === null) return;
    const target = event.target as HTMLElement | null;
    if (target && /^(INPUT|TEXTAREA|SELECT)$/.test(target.tagName)) return;
    if (controlsDisabled()) return;
    switch (event.key) {
      case 'p':
      case 'P':
        labeler.choose(1);
        break;
      case 'n':
      case 'N':
        labeler.choose(-1);
        break;
      case 'j':
      case 'ArrowDown':
        labeler.move(1);
        break;
      case 'k':
      case 'ArrowUp':
        labeler.move(-1);
        break;
      case 'u':
      case 'Backspace':
        labeler.clearChoice();
        break;
      case 'Enter':
        void submit();
        return;
      default:
        return;
    }
    event.preventDefault();
    renderLabelScreen();
  }

  function onClick(event: Event): void {
    const target = (event.target as HTMLElement).closest<HTMLElement>('[data-action]');
    if (!target) return;
    const action = target.dataset.action;
    if (action === 'create') void create();
    if (action === 'submit') void submit();
    if (action === 'export') void doExport();
    if (action === 'row-pos' || action === 'row-neg') {
      labeler.cursor = Number(target.dataset.row);
      labeler.choose(action === 'row-pos' ? 1 : -1);
      renderLabelScreen();
    }
  }

  document.addEventListener('keydown', onKeydown);
  root.addEventListener('click', onClick);

  // -- server round trips ---------------------------------------------------

  async function create(): Promise<void> {
    const dataset = inputValue('dataset');
    const body: Record<string, unknown> = { dataset };
    const texts = inputValue('texts')
      .split('\n')
      .map((line) => line.trim())
      .filter((line) => line.length > 0);
    if (texts.length > 0) body.texts = texts;
    for (const [field, key] of [
      ['init-size', 'init_size'],
      ['batch-size', 'batch_size'],
      ['seed', 'seed'],
      ['stop-set-size', 'stop_set_size'],
      ['stop-window', 'stop_window'],
    ] as const) {
      const raw = inputValue(field);
      if (raw !== '') body[key] = Number(raw);
    }
    const rawThreshold = inputValue('stop-threshold');
    if (rawThreshold !== '') {
      body.stop_threshold = Number(rawThreshold);
      threshold = Number(rawThreshold);
    }
    busy = true;
    try {
      const view = await api.createSession(body as never);
      sessionId = view.session_id;
      labeler.setItems(view.items);
      notice = '';
      errorText = '';
    } catch (err) {
      showError(err, '.create-error');
      return;
    } finally {
      busy = false;
    }
    renderLabelScreen();
    await poll();
  }

  async function submit(): Promise<void> {
    if (sessionId === null || busy || controlsDisabled()) return;
    const entries = labeler.chosen();
    if (entries.length === 0) {
      notice = 'Label at least one item before submitting.';
      renderLabelScreen();
      return;
    }
    busy = true;
    try {
      const view = await api.submitLabels(sessionId, entries);
      const duplicates = entries.length - (view.accepted ?? entries.length);
      notice = duplicates > 0 ? `${duplicates} duplicate label(s) acknowledged without effect.` : '';
      errorText = '';
      labeler.setItems(view.items);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409 && sessionId !== null) {
        // someone else labeled part of the batch: drop those rows, keep ours
        const fresh = await api.getBatch(sessionId);
        const removed = labeler.setItems(fresh.items);
        notice = `${removed} item(s) were already labeled elsewhere and were removed (${err.detail}). Review and resubmit.`;
      } else {
        showError(err, '.label-error');
        busy = false;
        renderLabelScreen();
        return;
      }
    }
    busy = false;
    renderLabelScreen();
    await poll();
  }

  async function doExport(): Promise<void> {
    if (sessionId === null) return;
    try {
      const view = await api.exportSession(sessionId);
      const traceLines = view.trace === '' ? 0 : view.trace.trimEnd().split('\n').length;
      exportText =
        `${view.labeled_count} labeled instance(s); trace of ${traceLines} line(s)\n\n` +
        view.libsvm;
      renderLabelScreen();
    } catch (err) {
      showError(err, '.label-error');
    }
  }

  async function poll(): Promise<void> {
    if (sessionId === null) return;
    try {
      status = await api.getStatus(sessionId);
      if (labeler.isEmpty() && !TERMINAL.has(status.state)) {
        const batch = await api.getBatch(sessionId);
        labeler.setItems(batch.items);
      }
      stale = false;
    } catch {
      stale = true; // stale data stays on screen; the next poll retries
    }
    renderLabelScreen();
  }

  function showError(err: unknown, selector: string): void {
    errorText = err instanceof ApiError ? err.detail : String(err);
    const slot = root.querySelector<HTMLElement>(selector);
    if (slot) slot.textContent = errorText;
  }

  // -- rendering --------------------------------------------------------------

  function inputValue(id: string): string {
    const el = root.querySelector<HTMLInputElement | HTMLTextAreaElement>(`#${id}`);
    return el ? el.value.trim() : '';
  }

  function controlsDisabled(): boolean {
    return status !== null && TERMINAL.has(status.state);
  }

  function renderCreateScreen(): void {
    root.innerHTML = `
      <div class="create-screen">
        <h1>alpool annotation</h1>
        <p class="hint">Paste a LIBSVM pool, optionally one display sentence per row.</p>
        <label>dataset <textarea id="dataset" rows="8" spellcheck="false"></textarea></label>
        <label>texts (optional) <textarea id="texts" rows="4" spellcheck="false"></textarea></label>
        <div class="config-grid">
          <label>init size <input id="init-size" type="number" min="1"></label>
          <label>batch size <input id="batch-size" type="number" min="1"></label>
          <label>seed <input id="seed" type="number" value="0"></label>
          <label>stop set size <input id="stop-set-size" type="number" min="1"></label>
          <label>stop threshold <input id="stop-threshold" type="number" step="0.001" value="0.99"></label>
          <label>stop window <input id="stop-window" type="number" min="1"></label>
        </div>
        <button class="create" data-action="create">Create session</button>
        <div class="create-error error"></div>
      </div>`;
  }

  function renderLabelScreen(): void {
    if (sessionId === null) return;
    const disabled = controlsDisabled();
    const chosenCount = labeler.chosen().length;
    root.innerHTML = `
      <div class="label-screen">
        <header>
          <span class="session-chip">session ${esc(sessionId)}</span>
          <span class="state-badge state-${esc(status?.state ?? 'training')}">${esc(
            status?.state ?? 'training'
          )}</span>
          ${stale ? '<span class="stale-indicator" title="last poll failed">stale — retrying</span>' : ''}
        </header>
        ${bannerHtml()}
        ${progressHtml()}
        ${batchHtml(disabled)}
        <footer>
          <button class="submit" data-action="submit" ${
            disabled || chosenCount === 0 ? 'disabled' : ''
          }>Submit ${chosenCount} label(s)</button>
          <span class="pending-note">${labeler.unlabeledCount()} unlabeled in batch</span>
          <span class="key-hints">${KEY_HINTS}</span>
        </footer>
        <section class="export-panel">
          <button class="export" data-action="export">Export</button>
          ${exportText ? `<pre class="export-text">${esc(exportText)}</pre>` : ''}
        </section>
        ${notice ? `<div class="notice">${esc(notice)}</div>` : ''}
        <div class="label-error error">${esc(errorText)}</div>
      </div>`;
  }

  function bannerHtml(): string {
    const stoppedAt = status?.stopped_at;
    if (stoppedAt === null || stoppedAt === undefined) {
      if (status?.state === 'completed') {
        return '<div class="stop-banner">Pool exhausted — every instance is labeled.</div>';
      }
      if (status?.state === 'failed') {
        return `<div class="stop-banner failed">Session failed: ${esc(status?.error ?? '')}</div>`;
      }
      return '';
    }
    const halted = status?.state === 'stopped';
    return `<div class="stop-banner">Predictions stabilized — stopping criterion fired at iteration ${stoppedAt}.${
      halted ? ' Session halted; export your labels.' : ' Labeling may continue.'
    }</div>`;
  }

  function progressHtml(): string {
    if (status === null) {
      return '<section class="progress">waiting for status…</section>';
    }
    const chips = status.agreements
      .map(
        (value) =>
          `<span class="chip ${value >= threshold ? 'ok' : 'low'}">${value.toFixed(3)}</span>`
      )
      .join('');
    return `
      <section class="progress">
        <span class="labeled">${status.labeled_count} / ${status.pool_size} labeled
          (${status.percent_labeled.toFixed(1)}%)</span>
        <span class="pa">PA ${status.pa === null ? '—' : formatNumber(status.pa)}</span>
        <span class="agreements">agreement ${chips || '—'} vs ${threshold}</span>
      </section>`;
  }

  function batchHtml(disabled: boolean): string {
    if (labeler.isEmpty()) {
      if (controlsDisabled()) {
        return '<section class="batch empty">No pending items.</section>';
      }
      return '<section class="batch empty">Retraining… next batch on its way.</section>';
    }
    const rows = labeler.rows
      .map((row, i) => {
        const value =
          row.item.abs_decision_value === null
            ? '—'
            : row.item.abs_decision_value.toFixed(3);
        const choice = row.choice === null ? '—' : row.choice === 1 ? '+1' : '−1';
        return `
          <li class="row ${i === labeler.cursor ? 'cursor' : ''} ${
            row.choice !== null ? 'labeled' : ''
          }" data-index="${row.item.index}">
            <span class="marker">${i === labeler.cursor ? '▸' : ''}</span>
            <span class="idx">#${row.item.index}</span>
            <span class="text">${esc(row.item.text)}</span>
            <span class="value" title="|f(x)| — distance from the hyperplane">${value}</span>
            <span class="choice">${choice}</span>
            <button data-action="row-pos" data-row="${i}" ${disabled ? 'disabled' : ''}>+1</button>
            <button data-action="row-neg" data-row="${i}" ${disabled ? 'disabled' : ''}>−1</button>
          </li>`;
      })
      .join('');
    return `<section class="batch"><ul>${rows}</ul></section>`;
  }

  function stop(): void {
    clearInterval(timer);
    document.removeEventListener('keydown', onKeydown);
    root.removeEventListener('click', onClick);
  }

  return { stop };
}

function formatNumber(value: number): string {
  return String(Number(value.toFixed(2)));
}

function esc(raw: string): string {
  return raw
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}
