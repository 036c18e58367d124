// DOM wiring: one conversation per tab, nothing persisted across reloads.

import { ApiError, fetchMeta, postChat } from "./api.js";
import {
  applyError,
  applyReply,
  beginSend,
  canSend,
  clampP,
  clampTemperature,
  dismissError,
  disconnected,
  initialState,
  retryRequest,
  transcriptText,
  withMeta,
  type UiConversationState,
} from "./state.js";
import { renderTranscript } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function fillSelect(select: HTMLSelectElement, options: string[], withAuto = false) {
  select.innerHTML = "";
  if (withAuto) {
    const opt = document.createElement("option");
    opt.value = "";
    opt.textContent = "auto";
    select.appendChild(opt);
  }
  for (const value of options) {
    const opt = document.createElement("option");
    opt.value = value;
    opt.textContent = value;
    select.appendChild(opt);
  }
}

export async function init(base = ""): Promise<{ getState: () => UiConversationState }> {
  let state = initialState();

  const transcript = el<HTMLDivElement>("transcript");
  const input = el<HTMLTextAreaElement>("composer-input");
  const sendBtn = el<HTMLButtonElement>("send");
  const topicSel = el<HTMLSelectElement>("topic");
  const forceSel = el<HTMLSelectElement>("force-emotion");
  const tagEmotionSel = el<HTMLSelectElement>("tag-emotion");
  const tagActSel = el<HTMLSelectElement>("tag-act");
  const pSlider = el<HTMLInputElement>("p-slider");
  const pValue = el<HTMLSpanElement>("p-value");
  const tSlider = el<HTMLInputElement>("t-slider");
  const tValue = el<HTMLSpanElement>("t-value");
  const seedInput = el<HTMLInputElement>("seed");
  const copyBtn = el<HTMLButtonElement>("copy");
  const status = el<HTMLSpanElement>("status");

  function sync() {
    transcript.innerHTML = renderTranscript(state);
    transcript.scrollTop = transcript.scrollHeight;
    sendBtn.disabled = !canSend(state, input.value);
    input.disabled = !state.connected || state.pending || state.error !== null;
    pValue.textContent = state.p.toFixed(2);
    tValue.textContent = state.temperature.toFixed(2);
    pSlider.value = String(state.p);
    tSlider.value = String(state.temperature);
    status.className = state.connected ? "on" : "off";
    const retry = document.getElementById("retry");
    if (retry) retry.addEventListener("click", onRetry);
    const dismiss = document.getElementById("dismiss");
    if (dismiss) {
      dismiss.addEventListener("click", () => {
        state = dismissError(state);
        sync();
      });
    }
  }

  async function dispatch(pair: { state: UiConversationState; request: unknown }) {
    state = pair.state;
    sync();
    try {
      const response = await postChat(pair.request as never, base);
      state = applyReply(state, response);
    } catch (err) {
      const message =
        err instanceof ApiError
          ? err.field
            ? `${err.message} (${err.field})`
            : err.message
          : "network failure";
      state = applyError(state, message);
    }
    sync();
  }

  function onSend() {
    if (!canSend(state, input.value)) return;
    const text = input.value;
    input.value = "";
    void dispatch(beginSend(state, text));
  }

  function onRetry() {
    void dispatch(retryRequest(state));
  }

  sendBtn.addEventListener("click", onSend);
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && !event.shiftKey) {
      event.preventDefault();
      onSend();
    }
  });
  topicSel.addEventListener("change", () => {
    state = { ...state, topic: topicSel.value };
    sync();
  });
  forceSel.addEventListener("change", () => {
    state = { ...state, forceEmotion: forceSel.value || null };
    sync();
  });
  tagEmotionSel.addEventListener("change", () => {
    state = { ...state, nextEmotion: tagEmotionSel.value || null };
  });
  tagActSel.addEventListener("change", () => {
    state = { ...state, nextAct: tagActSel.value || null };
  });
  pSlider.addEventListener("input", () => {
    state = { ...state, p: clampP(Number(pSlider.value)) };
    sync();
  });
  tSlider.addEventListener("input", () => {
    state = { ...state, temperature: clampTemperature(Number(tSlider.value)) };
    sync();
  });
  seedInput.addEventListener("change", () => {
    const raw = seedInput.value.trim();
    state = { ...state, seed: raw === "" ? null : Number(raw) };
  });
  copyBtn.addEventListener("click", () => {
    void navigator.clipboard?.writeText(transcriptText(state));
  });

  async function connect() {
    try {
      const meta = await fetchMeta(base);
      state = withMeta(state, meta);
      fillSelect(topicSel, meta.topics);
      fillSelect(forceSel, meta.emotions, true);
      fillSelect(tagEmotionSel, meta.emotions, true);
      fillSelect(tagActSel, meta.acts, true);
      topicSel.value = state.topic;
    } catch {
      state = disconnected(state);
      setTimeout(() => void connect(), 2000); // keep polling until reachable
    }
    sync();
  }

  await connect();
  return { getState: () => state };
}

declare global {
  interface Window {
    empchatInit?: typeof init;
  }
}

// the page opts in via <body data-empchat-auto="1">; tests call init() themselves
function wantsAutoInit(): boolean {
  return typeof document !== "undefined" && document.body?.dataset.empchatAuto === "1";
}

if (typeof window !== "undefined") {
  window.empchatInit = init;
  if (wantsAutoInit()) {
    if (document.readyState !== "loading") {
      void init();
    } else {
      document.addEventListener("DOMContentLoaded", () => void init());
    }
  }
}
