// Typed client for the two service endpoints. Same-origin by default; an
// explicit base URL is only used by the end-to-end tests.

export interface Meta {
  emotions: string[];
  acts: string[];
  topics: string[];
  sampling_defaults: { p: number; temperature: number; max_new_tokens: number };
  model_hash: string;
  max_positions: number;
}

export interface HistoryEntry {
  speaker: 1 | 2;
  text: string;
  emotion?: string;
  act?: string;
}

export interface ChatRequestBody {
  topic: string;
  history: HistoryEntry[];
  sampling: { p: number; temperature: number; max_new_tokens: number; seed?: number };
  force_emotion?: string;
}

export interface ChatResponseBody {
  reply: string;
  predicted_emotion: string;
  emotion_scores: Record<string, number>;
  act_used: string;
  token_count: number;
  model_hash: string;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly field?: string,
  ) {
    super(message);
  }
}

async function errorOf(res: Response): Promise<ApiError> {
  let message = `HTTP ${res.status}`;
  let field: string | undefined;
  try {
    const body = (await res.json()) as { error?: string; field?: string };
    if (body.error) message = body.error;
    field = body.field;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(message, res.status, field);
}

export async function fetchMeta(base = ""): Promise<Meta> {
  const res = await fetch(`${base}/api/meta`);
  if (!res.ok) throw await errorOf(res);
  return (await res.json()) as Meta;
}

export async function postChat(body: ChatRequestBody, base = ""): Promise<ChatResponseBody> {
  const res = await fetch(`${base}/api/chat`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!res.ok) throw await errorOf(res);
  return (await res.json()) as ChatResponseBody;
}
