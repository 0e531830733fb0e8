// Typed client for the annotation service. Five endpoints, nothing else.

export type SessionState =
  | 'awaiting_labels'
  | 'training'
  | 'stopped'
  | 'completed'
  | 'failed';

export type Label = 1 | -1;

export interface BatchItem {
  index: number;
  text: string;
  abs_decision_value: number | null;
}

export interface BatchView {
  session_id: string;
  pending: number[];
  items: BatchItem[];
  state: SessionState;
  stopped: boolean;
  halt_on_stop?: boolean;
  accepted?: number;
  labeled_count?: number;
}

export interface StatusView {
  session_id: string;
  state: SessionState;
  labeled_count: number;
  pool_size: number;
  percent_labeled: number;
  pa: number | null;
  agreements: number[];
  stopped_at: number | null;
  error: string | null;
}

export interface ExportView {
  session_id: string;
  labeled_count: number;
  libsvm: string;
  model: string | null;
  trace: string;
}

export interface CreateSessionBody {
  dataset: string;
  texts?: string[];
  init_size?: number;
  batch_size?: number;
  seed?: number;
  stop_set_size?: number;
  stop_threshold?: number;
  stop_window?: number;
  halt_on_stop?: boolean;
}

export interface LabelEntry {
  index: number;
  label: Label;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly error: string,
    readonly detail: string
  ) {
    super(`${status} ${error}: ${detail}`);
  }
}

export interface Api {
  createSession(body: CreateSessionBody): Promise<BatchView>;
  getBatch(sessionId: string): Promise<BatchView>;
  submitLabels(sessionId: string, labels: LabelEntry[]): Promise<BatchView>;
  getStatus(sessionId: string): Promise<StatusView>;
  exportSession(sessionId: string): Promise<ExportView>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient implements Api {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init)
  ) {}

  createSession(body: CreateSessionBody): Promise<BatchView> {
    return this.request<BatchView>('POST', '/sessions', body);
  }

  getBatch(sessionId: string): Promise<BatchView> {
    return this.request<BatchView>('GET', `/sessions/${sessionId}/batch`);
  }

  submitLabels(sessionId: string, labels: LabelEntry[]): Promise<BatchView> {
    return this.request<BatchView>('POST', `/sessions/${sessionId}/labels`, { labels });
  }

  getStatus(sessionId: string): Promise<StatusView> {
    return this.request<StatusView>('GET', `/sessions/${sessionId}/status`);
  }

  exportSession(sessionId: string): Promise<ExportView> {
    return this.request<ExportView>('GET', `/sessions/${sessionId}/export`);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'Content-Type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      throw await toApiError(response);
    }
    return (await response.json()) as T;
  }
}

async function toApiError(response: Response): Promise<ApiError> {
  let error = 'error';
  let detail = `${response.status}`;
  try {
    const payload = await response.json();
    if (payload && typeof payload === 'object') {
      error = String(payload.error ?? error);
      detail = String(payload.detail ?? detail);
    }
  } catch {
    // non-JSON error body; keep the status fallback
  }
  return new ApiError(response.status, error, detail);
}
