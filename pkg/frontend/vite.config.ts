import { defineConfig } from "vite";

export default defineConfig({
  build: {
    outDir: "dist",
    minify: false,
    lib: {
      entry: "src/entry.ts",
      name: "CosiscanHarness",
      formats: ["iife"],
      fileName: () => "harness.js",
    },
  },
});
