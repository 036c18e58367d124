import { defineConfig } from "vitest/config";

// the happy-dom window must share the live server's origin, or its
// same-origin policy blocks the end-to-end session's fetches
export default defineConfig({
  test: {
    environmentOptions: {
      happyDOM: { url: process.env.EMPCHAT_SERVER || "http://localhost:8080" },
    },
  },
});
