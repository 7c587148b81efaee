import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    globalSetup: "tests/globalSetup.ts",
    testTimeout: 30000,
    hookTimeout: 120000,
  },
});
