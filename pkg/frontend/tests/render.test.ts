import { describe, expect, it } from "vitest";

import { EMOTION_COLORS, renderMessage, renderTranscript } from "../src/render.js";
import { applyError, applyReply, beginSend, initialState } from "../src/state.js";
import type { UiConversationState } from "../src/state.js";

function conversation(): UiConversationState {
  let state: UiConversationState = { ...initialState(), connected: true, topic: "work" };
  state = beginSend(state, "Where is the report?").state;
  state = applyReply(state, {
    reply: "It is on your desk.",
    predicted_emotion: "no-emotion",
    emotion_scores: { "no-emotion": 0.61, happiness: 0.22 },
    act_used: "neutral",
    token_count: 6,
    model_hash: "x",
  });
  return state;
}

describe("transcript rendering", () => {
  it("renders an empty connected conversation", () => {
    const state = { ...initialState(), connected: true };
    expect(renderTranscript(state)).toMatchSnapshot();
  });

  it("renders a two-turn conversation with badges", () => {
    expect(renderTranscript(conversation())).toMatchSnapshot();
  });

  it("renders the pending indicator", () => {
    const state = beginSend(conversation(), "thanks!").state;
    expect(renderTranscript(state)).toMatchSnapshot();
  });

  it("renders the error banner with retry and dismiss", () => {
    const sent = beginSend(conversation(), "thanks!").state;
    expect(renderTranscript(applyError(sent, "context overflow"))).toMatchSnapshot();
  });

  it("renders the disconnected notice", () => {
    expect(renderTranscript(initialState())).toMatchSnapshot();
  });

  it("is a pure function of state", () => {
    const state = conversation();
    expect(renderTranscript(state)).toBe(renderTranscript(state));
  });

  it("escapes markup in user text", () => {
    const state = beginSend({ ...initialState(), connected: true, topic: "work" },
                            "<script>alert(1)</script>").state;
    const html = renderMessage(state.messages[0]!);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });

  it("tooltip carries sorted emotion scores", () => {
    const state = conversation();
    const html = renderTranscript(state);
    expect(html).toContain("no-emotion: 0.6100");
    expect(html).toContain(`background:${EMOTION_COLORS["no-emotion"]}`);
  });
});
