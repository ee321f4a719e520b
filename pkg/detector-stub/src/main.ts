/**
 * Detector plugin entry point: a long-running process answering the
 * faceprobe wire protocol on stdin/stdout.
 *
 * Usage: node dist/main.js --config <path>
 *
 * The request loop is strictly sequential, so responses come back one per
 * request line in request order. A malformed line gets an error response
 * and the loop continues; it never kills the process.
 */

import { createInterface } from "node:readline";
import {
  ERR_MALFORMED,
  ERR_UNSUPPORTED,
  encodeError,
  encodeHelloResponse,
  encodeScoreResponse,
  parseRequest,
} from "./protocol.js";
import { StubConfig, loadConfig } from "./scorer.js";

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function serve(config: StubConfig): Promise<void> {
  const rl = createInterface({ input: process.stdin, terminal: false });
  for await (const raw of rl) {
    const line = raw.trim();
    if (line === "") continue;
    const parsed = parseRequest(line);
    let reply: string;
    switch (parsed.kind) {
      case "hello":
        reply = encodeHelloResponse(config.detectorId);
        break;
      case "score": {
        if (config.latencyMs > 0) await sleep(config.latencyMs);
        try {
          const pFake = config.scorer.score(parsed.request.probeId, parsed.request.imagePath);
          reply = encodeScoreResponse(parsed.request.probeId, config.detectorId, pFake);
        } catch (err) {
          reply = encodeError(err instanceof Error ? err.message : String(err));
        }
        break;
      }
      case "unsupported":
        reply = encodeError(ERR_UNSUPPORTED);
        break;
      default:
        reply = encodeError(ERR_MALFORMED);
    }
    process.stdout.write(reply + "\n");
  }
}

function parseArgs(argv: string[]): string {
  const index = argv.indexOf("--config");
  if (index === -1 || index + 1 >= argv.length) {
    process.stderr.write("usage: main.js --config <path>\n");
    process.exit(2);
  }
  return argv[index + 1];
}

const isEntryPoint = process.argv[1] !== undefined
  && import.meta.url.endsWith(process.argv[1].split("/").pop() as string);

if (isEntryPoint) {
  const config = loadConfig(parseArgs(process.argv.slice(2)));
  serve(config).catch((err) => {
    process.stderr.write(String(err) + "\n");
    process.exit(1);
  });
}
