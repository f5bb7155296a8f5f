/**
 * Typed client for the canecover serve API.
 *
 * All requests go through the injectable `Transport`, which is the single
 * seam tests intercept: every number the UI displays originates from a
 * transport response, never from client-side recomputation.
 */

export interface ImageInfo {
  id: string;
  name: string;
  w: number;
  h: number;
}

export interface CoverageReport {
  threshold_user: number;
  threshold_gray: number;
  total: number;
  populated: number;
  depopulated: number;
  populated_pct: number;
  depopulated_pct: number;
  low_contrast: boolean;
  mask_png: string;
}

export interface Prediction {
  label: string;
  probs: Record<string, number>;
}

export type Transport = (path: string, init?: RequestInit) => Promise<Response>;

const PNG_MAGIC = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

/** Client-side check so a bad upload never reaches the network. */
export function isPngBytes(bytes: Uint8Array): boolean {
  return PNG_MAGIC.every((value, i) => bytes[i] === value);
}

export class ApiClient {
  constructor(private readonly transport: Transport = (p, init) => fetch(p, init)) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.transport(path, init);
    const body: unknown = await resp.json();
    if (!resp.ok) {
      const message =
        typeof body === "object" && body !== null && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${resp.status}`;
      throw new Error(message);
    }
    return body as T;
  }

  health(): Promise<{ status: string }> {
    return this.json("/health");
  }

  listImages(): Promise<ImageInfo[]> {
    return this.json("/images");
  }

  upload(data: ArrayBuffer): Promise<{ id: string }> {
    return this.json("/upload", { method: "POST", body: data });
  }

  coverage(id: string, threshold: number): Promise<CoverageReport> {
    return this.json("/coverage", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ id, threshold }),
    });
  }

  predict(id: string): Promise<Prediction> {
    return this.json("/predict", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ id }),
    });
  }

  enhance(id: string, outscale: number): Promise<{ id_out: string }> {
    return this.json("/enhance", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ id, outscale }),
    });
  }
}
