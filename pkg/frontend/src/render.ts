// Pure transcript rendering: state in, HTML string out (snapshot-testable).

import type { UiConversationState, Message } from "./state.js";

// fixed palette, one color per emotion label
export const EMOTION_COLORS: Record<string, string> = {
  "no-emotion": "#8b949e",
  anger: "#f85149",
  disgust: "#7c4dbd",
  fear: "#d29922",
  happiness: "#3fb950",
  sadness: "#58a6ff",
  surprise: "#db61a2",
};

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function scoreTooltip(scores: Record<string, number>): string {
  return Object.entries(scores)
    .sort((a, b) => b[1] - a[1])
    .map(([label, value]) => `${label}: ${value.toFixed(4)}`)
    .join("\n");
}

export function renderBadge(message: Message): string {
  if (!message.emotion) return "";
  const color = EMOTION_COLORS[message.emotion] ?? "#8b949e";
  const tooltip = message.scores ? ` title="${escapeHtml(scoreTooltip(message.scores))}"` : "";
  return (
    `<span class="badge" style="background:${color}"${tooltip}>` +
    `${escapeHtml(message.emotion)}</span>`
  );
}

export function renderMessage(message: Message): string {
  const side = message.speaker === 1 ? "user" : "bot";
  const act = message.act ? `<span class="act">${escapeHtml(message.act)}</span>` : "";
  return (
    `<div class="msg ${side}">` +
    `<div class="text">${escapeHtml(message.text)}</div>` +
    `<div class="tags">${renderBadge(message)}${act}</div>` +
    `</div>`
  );
}

export function renderTranscript(state: UiConversationState): string {
  const rows = state.messages.map(renderMessage);
  if (state.pending) {
    rows.push('<div class="msg bot pending"><div class="text">…</div></div>');
  }
  if (state.error !== null) {
    rows.push(
      '<div class="banner" role="alert">' +
        `<span>${escapeHtml(state.error)}</span>` +
        '<button id="retry">Retry</button><button id="dismiss">Dismiss</button>' +
        "</div>",
    );
  }
  if (!state.connected) {
    rows.push('<div class="banner notice">Service unreachable. Waiting to reconnect…</div>');
  }
  return rows.join("");
}
