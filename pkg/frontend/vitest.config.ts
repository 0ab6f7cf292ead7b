import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    // the live-server test spawns the annotation server and waits for it
    testTimeout: 90_000,
    hookTimeout: 90_000,
  },
});
