import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    // the e2e file boots the real service and drives full labeling rounds
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
