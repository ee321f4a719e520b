/**
 * Wire protocol: line-delimited JSON over stdin/stdout, bit-exact.
 *
 *   request   {"op":"hello"}
 *   response  {"detector_id":"...","protocol":1}
 *   request   {"op":"score","probe_id":"...","image_path":"..."}
 *   response  {"probe_id":"...","detector_id":"...","p_fake":0.500000}
 *   error     {"error":"malformed request"} | {"error":"unsupported op"}
 *
 * One response line per request line, order-preserving, UTF-8. The p_fake
 * field always carries exactly six fractional digits so that independent
 * implementations emit identical bytes.
 */

export const PROTOCOL_VERSION = 1;
export const ERR_MALFORMED = "malformed request";
export const ERR_UNSUPPORTED = "unsupported op";

export function encodeHelloResponse(detectorId: string): string {
  return `{"detector_id":${JSON.stringify(detectorId)},"protocol":${PROTOCOL_VERSION}}`;
}

export function encodeScoreResponse(probeId: string, detectorId: string, pFake: number): string {
  return (
    `{"probe_id":${JSON.stringify(probeId)},` +
    `"detector_id":${JSON.stringify(detectorId)},` +
    `"p_fake":${pFake.toFixed(6)}}`
  );
}

export function encodeError(message: string): string {
  return `{"error":${JSON.stringify(message)}}`;
}

export interface ScoreRequest {
  probeId: string;
  imagePath: string;
}

export type ParsedRequest =
  | { kind: "hello" }
  | { kind: "score"; request: ScoreRequest }
  | { kind: "malformed" }
  | { kind: "unsupported" };

export function parseRequest(line: string): ParsedRequest {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch {
    return { kind: "malformed" };
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    return { kind: "malformed" };
  }
  const op = (doc as Record<string, unknown>)["op"];
  if (op === "hello") {
    return { kind: "hello" };
  }
  if (op === "score") {
    const probeId = (doc as Record<string, unknown>)["probe_id"];
    const imagePath = (doc as Record<string, unknown>)["image_path"];
    if (typeof probeId !== "string" || typeof imagePath !== "string") {
      return { kind: "malformed" };
    }
    return { kind: "score", request: { probeId, imagePath } };
  }
  return { kind: "unsupported" };
}
