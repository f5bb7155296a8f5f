/** Segmentation-mask overlay rendering. */

const HIGHLIGHT: [number, number, number] = [255, 64, 64];
const OVERLAY_ALPHA = 128; // 50% opacity keeps the field visible underneath

/**
 * Turn a grayscale mask (one byte per pixel, 255 = depopulated) into RGBA
 * highlight pixels. Pure so it can be tested without a canvas.
 */
export function colorizeMask(
  gray: Uint8Array | Uint8ClampedArray,
  color: [number, number, number] = HIGHLIGHT,
  alpha: number = OVERLAY_ALPHA,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(gray.length * 4);
  for (let i = 0; i < gray.length; i++) {
    if (gray[i] > 0) {
      out[i * 4] = color[0];
      out[i * 4 + 1] = color[1];
      out[i * 4 + 2] = color[2];
      out[i * 4 + 3] = alpha;
    }
  }
  return out;
}

/**
 * Decode the base64 mask PNG and paint it over the canvas. Quietly skips
 * environments without 2D canvas support (e.g. jsdom in tests).
 */
export async function drawOverlay(canvas: HTMLCanvasElement, maskPngBase64: string): Promise<void> {
  let context: CanvasRenderingContext2D | null;
  try {
    context = canvas.getContext("2d");
  } catch {
    return;
  }
  if (!context) return;
  const image = new Image();
  await new Promise<void>((resolve, reject) => {
    image.onload = () => resolve();
    image.onerror = () => reject(new Error("mask decode failed"));
    image.src = `data:image/png;base64,${maskPngBase64}`;
  });
  canvas.width = image.width;
  canvas.height = image.height;
  const scratch = document.createElement("canvas");
  scratch.width = image.width;
  scratch.height = image.height;
  const sctx = scratch.getContext("2d");
  if (!sctx) return;
  sctx.drawImage(image, 0, 0);
  const mask = sctx.getImageData(0, 0, image.width, image.height);
  const gray = new Uint8Array(image.width * image.height);
  for (let i = 0; i < gray.length; i++) gray[i] = mask.data[i * 4];
  const overlay = context.createImageData(image.width, image.height);
  overlay.data.set(colorizeMask(gray));
  context.clearRect(0, 0, canvas.width, canvas.height);
  context.putImageData(overlay, 0, 0);
}

export function clearOverlay(canvas: HTMLCanvasElement): void {
  try {
    const context = canvas.getContext("2d");
    context?.clearRect(0, 0, canvas.width, canvas.height);
  } catch {
    // no canvas backend; nothing to clear
  }
}
