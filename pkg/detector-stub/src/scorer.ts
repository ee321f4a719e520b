/**
 * Stub scorers standing in for real deepfake detectors.
 *
 * The fixed-error-rate scorer flips the oracle's answer deterministically:
 * u = first 8 bytes of SHA-256("detectorId|seed|probeId") as a big-endian
 * unsigned 64-bit integer, flip iff u < floor(rate * 2^64). Any language
 * reproduces the same decision bit-for-bit, which is what lets an
 * out-of-process stub match an in-process one at the same seed.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export function unitDraw(detectorId: string, seed: number, probeId: string): bigint {
  const digest = createHash("sha256")
    .update(`${detectorId}|${seed}|${probeId}`, "utf8")
    .digest();
  return digest.readBigUInt64BE(0);
}

export function flipThreshold(rate: number): bigint {
  if (rate <= 0) return 0n;
  if (rate >= 1) return 1n << 64n;
  // rate * 2^64 >= 2^53 is already integral as a double, so BigInt is exact
  // and matches int(rate * 2**64) elsewhere.
  return BigInt(Math.floor(rate * 2 ** 64));
}

export function shouldFlip(detectorId: string, seed: number, probeId: string, rate: number): boolean {
  if (rate < 0 || rate > 1) {
    throw new Error(`rate ${rate} outside [0, 1]`);
  }
  return unitDraw(detectorId, seed, probeId) < flipThreshold(rate);
}

export interface Scorer {
  score(probeId: string, imagePath: string): number;
}

export class ConstantScorer implements Scorer {
  constructor(private readonly pFake: number) {
    if (pFake < 0 || pFake > 1) throw new Error(`p_fake ${pFake} outside [0, 1]`);
  }

  score(): number {
    return this.pFake;
  }
}

/** Ground truth straight from the dataset manifest: 1 for fakes, 0 for reals. */
export class OracleScorer implements Scorer {
  private readonly fakeById = new Map<string, boolean>();

  constructor(manifestPath: string) {
    const doc = JSON.parse(readFileSync(manifestPath, "utf8"));
    if (!Array.isArray(doc.probes)) {
      throw new Error(`manifest ${manifestPath} has no probes array`);
    }
    for (const probe of doc.probes) {
      this.fakeById.set(String(probe.probe_id), probe.kind === "Fake");
    }
  }

  score(probeId: string): number {
    const isFake = this.fakeById.get(probeId);
    if (isFake === undefined) {
      throw new Error(`probe ${probeId} not in manifest`);
    }
    return isFake ? 1.0 : 0.0;
  }
}

export class FixedRatesScorer implements Scorer {
  private readonly oracle: OracleScorer;

  constructor(
    manifestPath: string,
    private readonly detectorId: string,
    private readonly fnr: number,
    private readonly fpr: number,
    private readonly seed: number,
  ) {
    for (const rate of [fnr, fpr]) {
      if (rate < 0 || rate > 1) throw new Error(`rate ${rate} outside [0, 1]`);
    }
    this.oracle = new OracleScorer(manifestPath);
  }

  score(probeId: string): number {
    const truth = this.oracle.score(probeId);
    const rate = truth === 1.0 ? this.fnr : this.fpr;
    return shouldFlip(this.detectorId, this.seed, probeId, rate) ? 1.0 - truth : truth;
  }
}

export interface StubConfig {
  detectorId: string;
  latencyMs: number;
  scorer: Scorer;
}

export function loadConfig(path: string): StubConfig {
  const doc = JSON.parse(readFileSync(path, "utf8"));
  const detectorId = String(doc.detector_id ?? "stub");
  const behavior = doc.behavior ?? {};
  let scorer: Scorer;
  switch (behavior.type) {
    case "constant":
      scorer = new ConstantScorer(Number(behavior.p_fake));
      break;
    case "oracle":
      scorer = new OracleScorer(String(behavior.manifest_path));
      break;
    case "fixed_rates":
      scorer = new FixedRatesScorer(
        String(behavior.manifest_path),
        detectorId,
        Number(behavior.fnr ?? 0),
        Number(behavior.fpr ?? 0),
        Number(behavior.seed ?? 0),
      );
      break;
    default:
      throw new Error(`unknown behavior type ${behavior.type}`);
  }
  return { detectorId, latencyMs: Number(doc.latency_ms ?? 0), scorer };
}
