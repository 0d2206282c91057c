// Typed client for the inference service. One in-flight request per
// endpoint: issuing a new one aborts the previous (latest wins).

export type LabelScore = {
  label: string;
  probability: number;
  distance: number;
  token_scores: number[];
};

export type PredictResponse = {
  labels: LabelScore[];
  tokens: string[];
};

export type Exemplar = {
  doc_id: string;
  distance: number;
  top_spans: [number, number][];
  tokens: string[];
};

export type PrototypesResponse = {
  label: string;
  mode: "typical" | "atypical";
  exemplars: Exemplar[];
};

export type LabelInfo = {
  id: number;
  name: string;
  train_frequency: number;
  val_roc_auc: number | null;
};

export type ServiceError = { error: string; code: string };

export class ApiError extends Error {
  readonly code: string;
  constructor(code: string, message: string) {
    super(message);
    this.code = code;
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => null);
  if (!response.ok) {
    const err = (body ?? {}) as Partial<ServiceError>;
    throw new ApiError(err.code ?? `http_${response.status}`, err.error ?? response.statusText);
  }
  return body as T;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly inFlight = new Map<string, AbortController>();

  constructor(baseUrl: string, private readonly fetchFn: typeof fetch = fetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private begin(endpoint: string): AbortSignal {
    this.inFlight.get(endpoint)?.abort();
    const controller = new AbortController();
    this.inFlight.set(endpoint, controller);
    return controller.signal;
  }

  async predict(text: string, topK: number): Promise<PredictResponse> {
    const signal = this.begin("predict");
    const response = await this.fetchFn(`${this.baseUrl}/predict`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text, top_k: topK }),
      signal,
    });
    return parseOrThrow<PredictResponse>(response);
  }

  async prototypes(
    label: string,
    k: number,
    mode: "typical" | "atypical",
  ): Promise<PrototypesResponse> {
    const signal = this.begin("prototypes");
    const response = await this.fetchFn(
      `${this.baseUrl}/prototypes/${encodeURIComponent(label)}?k=${k}&mode=${mode}`,
      { signal },
    );
    return parseOrThrow<PrototypesResponse>(response);
  }

  async labels(): Promise<{ labels: LabelInfo[] }> {
    const response = await this.fetchFn(`${this.baseUrl}/labels`);
    return parseOrThrow(response);
  }

  async health(): Promise<{ model_hash: string | null; n_labels: number }> {
    const response = await this.fetchFn(`${this.baseUrl}/health`);
    return parseOrThrow(response);
  }
}
