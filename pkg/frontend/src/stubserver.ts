/**
 * In-memory stand-in for the serve API used by the tests.
 *
 * Coverage follows the server's exact semantics (gray cut =
 * round(user/10*255), strict ">" comparison, 2-decimal percentages) over
 * an explicit pixel array, so scripted slider sweeps see the same numbers
 * the real stack would produce. Every request is recorded so tests can
 * audit that displayed values originate from transport responses only.
 */

import type { CoverageReport, ImageInfo, Transport } from "./api.js";

export interface RecordedRequest {
  path: string;
  body: unknown;
}

export interface StubImage {
  info: ImageInfo;
  pixels: number[]; // grayscale values
}

export function checkerboardPixels(side: number): number[] {
  const pixels: number[] = [];
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) {
      pixels.push((x + y) % 2 === 0 ? 0 : 255);
    }
  }
  return pixels;
}

export function coverageOf(pixels: number[], thresholdUser: number): Omit<CoverageReport, "mask_png"> {
  const cut = Math.floor((thresholdUser / 10) * 255 + 0.5);
  const depopulated = pixels.filter((value) => value > cut).length;
  const total = pixels.length;
  const round2 = (value: number) => Math.round(value * 100) / 100;
  return {
    threshold_user: thresholdUser,
    threshold_gray: cut,
    total,
    populated: total - depopulated,
    depopulated,
    populated_pct: round2((100 * (total - depopulated)) / total),
    depopulated_pct: round2((100 * depopulated) / total),
    low_contrast: false,
  };
}

export class StubServer {
  readonly requests: RecordedRequest[] = [];
  inFlight = 0;
  maxInFlight = 0;
  /** When set, replaces the computed coverage payload (sentinel testing). */
  coverageOverride: ((threshold: number) => Partial<CoverageReport>) | null = null;
  /** When set, coverage responses are deferred until released. */
  holdCoverage = false;
  private held: Array<() => void> = [];

  constructor(private readonly images: StubImage[]) {}

  releaseAll(): void {
    const pending = this.held;
    this.held = [];
    for (const release of pending) release();
  }

  transport: Transport = async (path, init) => {
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    this.requests.push({ path, body });
    if (path === "/images") {
      return json(this.images.map((image) => image.info));
    }
    if (path === "/coverage") {
      this.inFlight += 1;
      this.maxInFlight = Math.max(this.maxInFlight, this.inFlight);
      if (this.holdCoverage) {
        await new Promise<void>((resolve) => this.held.push(resolve));
      }
      this.inFlight -= 1;
      const image = this.images.find((candidate) => candidate.info.id === body.id);
      if (!image) return json({ error: `unknown image id '${body.id}'` }, 404);
      const base = coverageOf(image.pixels, body.threshold);
      const override = this.coverageOverride ? this.coverageOverride(body.threshold) : {};
      return json({ ...base, ...override, mask_png: "" });
    }
    if (path === "/predict") {
      return json({ label: "despoblada", probs: { poblada: 0.125, despoblada: 0.875 } });
    }
    if (path === "/enhance") {
      return json({ id_out: `${body.id}-x${body.outscale}` });
    }
    if (path === "/upload") {
      return json({ id: "uploaded-1" });
    }
    return json({ error: `no such endpoint ${path}` }, 404);
  };
}

function json(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
