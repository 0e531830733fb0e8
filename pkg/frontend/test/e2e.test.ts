// @vitest-environment jsdom
// End-to-end: the real UI in a scripted DOM against the real service.
// A human stand-in labels the init batch plus three query batches with
// gold labels; the session's export must equal the labels entered and
// its trace must match a simulated run with the same seeds. A second
// session with a forced-low threshold must surface the stop banner.

import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { createServer } from 'node:net';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, afterEach, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient, Label, LabelEntry } from '../src/api.js';
import { AppHandle, mountApp } from '../src/app.js';

const PYTHON = 'python3';

const GEN_POOL = `
import json
from alpool.data import serialize_libsvm
from alpool.harness import SynthConfig, generate_synthetic
ds = generate_synthetic(SynthConfig(n=200, dim=30, positive_rate=0.25,
                                    class_separation=1.0, feature_density=0.2, seed=11))
print(json.dumps({"libsvm": serialize_libsvm(ds),
                  "labels": [int(inst.label) for inst in ds.instances]}))
`;

// same configs the UI form submits below; halt_on_stop mirrors the serve default
const REF_TRACE = `
import sys
from alpool.data import parse_libsvm
from alpool.learner import AlConfig, SimulatedOracle, run
from alpool.stopping import StopConfig
pool = parse_libsvm(sys.stdin.read())
trace = run(pool, AlConfig(init_size=10, batch_size=5, seed=5), SimulatedOracle(pool),
            StopConfig(stop_set_size=60, agreement_threshold=0.999, window=3, seed=5),
            strategy="closest", halt_on_stop=True)
sys.stdout.write(trace.to_jsonl())
`;

let service: ChildProcess;
let serviceErr = '';
let baseUrl = '';
let stateDir = '';
let poolLibsvm = '';
let goldLabels: number[] = [];
let handle: AppHandle | null = null;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.listen(0, '127.0.0.1', () => {
      const address = probe.address();
      if (address === null || typeof address === 'string') {
        reject(new Error('no port'));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

async function waitFor(check: () => boolean, timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!check()) {
    if (Date.now() > deadline) {
      throw new Error(`waitFor timed out; service stderr:\n${serviceErr}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 20));
  }
}

beforeAll(async () => {
  const generated = JSON.parse(execFileSync(PYTHON, ['-c', GEN_POOL], { encoding: 'utf8' }));
  poolLibsvm = generated.libsvm;
  goldLabels = generated.labels;

  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  stateDir = mkdtempSync(join(tmpdir(), 'alpool-e2e-'));
  service = spawn(
    PYTHON,
    ['-m', 'alpool.cli', 'serve', '--port', String(port), '--state-dir', stateDir],
    { stdio: ['ignore', 'ignore', 'pipe'] }
  );
  service.stderr!.on('data', (chunk) => {
    serviceErr += String(chunk);
  });

  const deadline = Date.now() + 60_000;
  for (;;) {
    try {
      const response = await fetch(`${baseUrl}/health`);
      if (response.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error(`service never became healthy; stderr:\n${serviceErr}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
});

afterAll(() => {
  service?.kill('SIGTERM');
  if (stateDir) rmSync(stateDir, { recursive: true, force: true });
});

afterEach(() => {
  handle?.stop();
  handle = null;
  document.body.innerHTML = '';
});

function mount(): HTMLElement {
  const root = document.createElement('div');
  document.body.appendChild(root);
  handle = mountApp(root, new ApiClient(baseUrl), { pollMs: 50 });
  return root;
}

function key(name: string): void {
  document.dispatchEvent(new KeyboardEvent('keydown', { key: name, bubbles: true }));
}

function rowIndices(root: HTMLElement): number[] {
  return [...root.querySelectorAll('.batch .row')].map((el) =>
    Number(el.getAttribute('data-index'))
  );
}

function sessionIdFrom(root: HTMLElement): string {
  return root.querySelector('.session-chip')!.textContent!.replace('session ', '').trim();
}

async function createThroughForm(
  root: HTMLElement,
  config: Record<string, string>
): Promise<void> {
  root.querySelector<HTMLTextAreaElement>('#dataset')!.value = poolLibsvm;
  for (const [id, value] of Object.entries(config)) {
    root.querySelector<HTMLInputElement>(`#${id}`)!.value = value;
  }
  root.querySelector<HTMLElement>('[data-action="create"]')!.click();
  await waitFor(() => root.querySelector('.label-screen') !== null);
  await waitFor(() => rowIndices(root).length > 0);
}

/** Label every row of the on-screen batch with its gold label, then submit. */
function labelBatchThroughUi(root: HTMLElement, entered: LabelEntry[]): Set<number> {
  const indices = rowIndices(root);
  for (const index of indices) {
    const label = goldLabels[index] as Label;
    key(label === 1 ? 'p' : 'n');
    entered.push({ index, label });
  }
  key('Enter');
  return new Set(indices);
}

async function awaitNextBatchOrStop(root: HTMLElement, previous: Set<number>): Promise<void> {
  await waitFor(() => {
    if (root.querySelector('.stop-banner') !== null) return true;
    const indices = rowIndices(root);
    return indices.length > 0 && !previous.has(indices[0]);
  });
}

describe('service + UI end to end', () => {
  it('labels entered through the UI round-trip into the export and trace', async () => {
    const root = mount();
    await createThroughForm(root, {
      'init-size': '10',
      'batch-size': '5',
      seed: '5',
      'stop-set-size': '60',
      'stop-threshold': '0.999',
      'stop-window': '3',
    });
    const sessionId = sessionIdFrom(root);
    const entered: LabelEntry[] = [];

    // init batch, then three query batches
    expect(rowIndices(root)).toHaveLength(10);
    let previous = labelBatchThroughUi(root, entered);
    for (let round = 0; round < 3; round++) {
      await awaitNextBatchOrStop(root, previous);
      expect(rowIndices(root)).toHaveLength(5);
      previous = labelBatchThroughUi(root, entered);
    }
    await awaitNextBatchOrStop(root, previous); // fourth batch: round 3 is trained
    expect(entered).toHaveLength(25);

    // (a) the export holds exactly the labels entered, in entry order
    const exported = await new ApiClient(baseUrl).exportSession(sessionId);
    expect(exported.labeled_count).toBe(25);
    const poolLines = poolLibsvm.trimEnd().split('\n');
    const exportLines = exported.libsvm.trimEnd().split('\n');
    expect(exportLines).toHaveLength(25);
    exportLines.forEach((line, k) => {
      // gold labels leave each line identical to its pool counterpart
      expect(line).toBe(poolLines[entered[k].index]);
      expect(parseInt(line.split(' ')[0], 10)).toBe(entered[k].label);
    });

    // (b) the session trace prefixes a simulated run with the same seeds
    const reference = execFileSync(PYTHON, ['-c', REF_TRACE], {
      encoding: 'utf8',
      input: poolLibsvm,
    });
    const refLines = reference.trimEnd().split('\n');
    const traceLines = exported.trace.trimEnd().split('\n');
    expect(traceLines).toHaveLength(5); // header + init + three batches
    expect(traceLines.slice(1)).toEqual(refLines.slice(1, 5));
    const header = JSON.parse(traceLines[0]);
    const refHeader = JSON.parse(refLines[0]);
    for (const field of ['strategy', 'seed', 'pa', 'init_indices'] as const) {
      expect(header[field]).toEqual(refHeader[field]);
    }
  });

  it('shows the stop banner and freezes controls when the criterion fires', async () => {
    const root = mount();
    await createThroughForm(root, {
      'init-size': '10',
      'batch-size': '5',
      seed: '5',
      'stop-set-size': '60',
      'stop-threshold': '0.01', // forced low: first full window fires the stop
      'stop-window': '1',
    });

    let previous = labelBatchThroughUi(root, []);
    for (let round = 0; round < 8 && root.querySelector('.stop-banner') === null; round++) {
      await awaitNextBatchOrStop(root, previous);
      if (root.querySelector('.stop-banner') !== null) break;
      previous = labelBatchThroughUi(root, []);
    }
    await waitFor(() => root.querySelector('.stop-banner') !== null);
    await waitFor(() => root.querySelector('.state-badge')!.textContent === 'stopped');

    expect(root.querySelector('.stop-banner')!.textContent).toContain(
      'stopping criterion fired'
    );
    expect(root.querySelector('button.submit')!.hasAttribute('disabled')).toBe(true);
    expect(root.querySelectorAll('.batch .row button')).toHaveLength(0);

    const status = await new ApiClient(baseUrl).getStatus(sessionIdFrom(root));
    expect(status.state).toBe('stopped');
    expect(status.stopped_at).not.toBeNull();
  });
});
