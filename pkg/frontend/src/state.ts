// Conversation state and its pure transitions. The transcript render is a
// function of this state alone, and every outgoing request is built here,
// so both are directly testable without a DOM.

import type { ChatRequestBody, ChatResponseBody, Meta } from "./api.js";

export interface Message {
  speaker: 1 | 2;
  text: string;
  emotion?: string;
  act?: string;
  scores?: Record<string, number>;
}

export interface UiConversationState {
  meta: Meta | null;
  topic: string;
  messages: Message[];
  p: number;
  temperature: number;
  maxNewTokens: number;
  seed: number | null;
  forceEmotion: string | null; // null means "auto"
  nextEmotion: string | null; // optional tag on the user's next turn
  nextAct: string | null;
  pending: boolean;
  error: string | null;
  connected: boolean;
}

export const P_MIN = 0.01;
export const P_MAX = 1.0;
export const TEMP_MIN = 0.01;
export const TEMP_MAX = 5.0;

export function initialState(): UiConversationState {
  return {
    meta: null,
    topic: "",
    messages: [],
    p: 0.9,
    temperature: 0.7,
    maxNewTokens: 48,
    seed: null,
    forceEmotion: null,
    nextEmotion: null,
    nextAct: null,
    pending: false,
    error: null,
    connected: false,
  };
}

export function clampP(value: number): number {
  if (!Number.isFinite(value)) return 0.9;
  return Math.min(P_MAX, Math.max(P_MIN, value));
}

export function clampTemperature(value: number): number {
  if (!Number.isFinite(value)) return 0.7;
  return Math.min(TEMP_MAX, Math.max(TEMP_MIN, value));
}

export function withMeta(state: UiConversationState, meta: Meta): UiConversationState {
  const topic = state.topic || meta.topics[0] || "";
  return {
    ...state,
    meta,
    topic,
    connected: true,
    p: clampP(meta.sampling_defaults.p),
    temperature: clampTemperature(meta.sampling_defaults.temperature),
    maxNewTokens: meta.sampling_defaults.max_new_tokens,
  };
}

export function disconnected(state: UiConversationState): UiConversationState {
  return { ...state, connected: false };
}

export function canSend(state: UiConversationState, text: string): boolean {
  return (
    state.connected &&
    !state.pending &&
    state.error === null &&
    text.trim().length > 0 &&
    state.topic !== ""
  );
}

export function buildRequest(state: UiConversationState): ChatRequestBody {
  const sampling: ChatRequestBody["sampling"] = {
    p: clampP(state.p),
    temperature: clampTemperature(state.temperature),
    max_new_tokens: state.maxNewTokens,
  };
  if (state.seed !== null) sampling.seed = state.seed;
  const body: ChatRequestBody = {
    topic: state.topic,
    // empty-text turns (a model that replied with nothing) cannot be echoed
    // back: the service requires non-empty history entries
    history: state.messages
      .filter((m) => m.text.length > 0)
      .map((m) => {
        const entry: ChatRequestBody["history"][number] = {
          speaker: m.speaker,
          text: m.text,
        };
        if (m.emotion) entry.emotion = m.emotion;
        if (m.act) entry.act = m.act;
        return entry;
      }),
    sampling,
  };
  if (state.forceEmotion) body.force_emotion = state.forceEmotion;
  return body;
}

export function beginSend(
  state: UiConversationState,
  text: string,
): { state: UiConversationState; request: ChatRequestBody } {
  const user: Message = { speaker: 1, text: text.trim() };
  if (state.nextEmotion) user.emotion = state.nextEmotion;
  if (state.nextAct) user.act = state.nextAct;
  const next: UiConversationState = {
    ...state,
    messages: [...state.messages, user],
    pending: true,
    error: null,
  };
  return { state: next, request: buildRequest(next) };
}

export function applyReply(
  state: UiConversationState,
  response: ChatResponseBody,
): UiConversationState {
  const reply: Message = {
    speaker: 2,
    text: response.reply,
    emotion: response.predicted_emotion,
    scores: response.emotion_scores,
  };
  return { ...state, messages: [...state.messages, reply], pending: false, error: null };
}

export function applyError(state: UiConversationState, message: string): UiConversationState {
  return { ...state, pending: false, error: message };
}

// dismissing an error also drops the unanswered user turn, which keeps the
// transcript strictly speaker-alternating
export function dismissError(state: UiConversationState): UiConversationState {
  const messages =
    state.messages.length > 0 && state.messages[state.messages.length - 1]?.speaker === 1
      ? state.messages.slice(0, -1)
      : state.messages;
  return { ...state, messages, error: null };
}

export function retryRequest(state: UiConversationState): {
  state: UiConversationState;
  request: ChatRequestBody;
} {
  const next: UiConversationState = { ...state, pending: true, error: null };
  return { state: next, request: buildRequest(next) };
}

export function transcriptText(state: UiConversationState): string {
  return state.messages
    .map((m) => {
      const who = m.speaker === 1 ? "you" : "model";
      const tag = m.emotion ? ` [${m.emotion}]` : "";
      return `${who}${tag}: ${m.text}`;
    })
    .join("\n");
}
