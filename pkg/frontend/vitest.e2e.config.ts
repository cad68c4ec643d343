import { defineConfig } from "vitest/config";

// The end-to-end run labels a full session against a live service; round
// turnaround includes model retraining, so the budget is generous.
export default defineConfig({
    test: {
        environment: "happy-dom",
        // the emulated page lives at the service origin, as it would when
        // served from --static; otherwise its fetch blocks as cross-origin
        environmentOptions: {
            happyDOM: { url: "http://127.0.0.1:8731" },
        },
        include: ["e2e/**/*.test.ts"],
        testTimeout: 420_000,
        hookTimeout: 180_000,
        fileParallelism: false,
    },
});
