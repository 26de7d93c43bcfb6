/**
 * Spawns the Python echo test-target so probe tests run against real HTTP
 * responses, and proxies observation lines back through the scanner's
 * ingest routine for round-trip checks.
 */

import { spawn, spawnSync, ChildProcess } from "node:child_process";

export interface PyTarget {
  baseUrl: string;
  process: ChildProcess;
  stop(): void;
}

/** Start via the scanner's own CLI; port 0 lets the OS pick one. */
export async function startPyTarget(): Promise<PyTarget> {
  const child = spawn(
    "python3",
    ["-m", "cosiscan.cli", "serve-target", "--host", "127.0.0.1", "--port", "0"],
    { cwd: __dirname, stdio: ["ignore", "pipe", "pipe"] },
  );
  const baseUrl = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("test target did not start")), 15000);
    let buffer = "";
    child.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/serving test target on (http:\/\/[^\s]+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
    child.stderr!.on("data", () => undefined);
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`test target exited early with code ${code}`));
    });
  });
  return {
    baseUrl,
    process: child,
    stop() {
      child.kill("SIGTERM");
    },
  };
}

/** Feed observation JSON lines to the scanner's ingest; returns its count. */
export function ingestWithScanner(jsonLines: string): { accepted: number; error: string | null } {
  const script = `
import sys
from cosiscan.dynamic import ingest_observations, ObservationError
try:
    observations = ingest_observations(sys.stdin.read())
    print(len(observations))
except ObservationError as exc:
    print(f"ERROR: {exc}", file=sys.stderr)
    sys.exit(1)
`;
  const result = spawnSync("python3", ["-c", script], {
    input: jsonLines,
    encoding: "utf-8",
  });
  if (result.status !== 0) {
    return { accepted: 0, error: result.stderr.trim() || "ingest failed" };
  }
  return { accepted: Number(result.stdout.trim()), error: null };
}
