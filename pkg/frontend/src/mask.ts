/**
 * Region mask editing. The mask lives as one byte per pixel (255 selected,
 * 0 not); painting is plain raster geometry so it can be tested without a
 * canvas. Encoding to a PNG data URI is done by the app layer, which owns
 * the canvas element.
 */

export class MaskGrid {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array;

  constructor(width: number, height: number) {
    if (width <= 0 || height <= 0) {
      throw new Error(`mask dimensions must be positive, got ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
  }

  paintDisc(cx: number, cy: number, radius: number, value = 255): void {
    const r = Math.max(0, radius);
    const x0 = Math.max(0, Math.floor(cx - r));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
    const y0 = Math.max(0, Math.floor(cy - r));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
    const r2 = r * r;
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = value;
        }
      }
    }
  }

  fillRect(x0: number, y0: number, x1: number, y1: number, value = 255): void {
    const xa = Math.max(0, Math.min(x0, x1));
    const xb = Math.min(this.width - 1, Math.max(x0, x1));
    const ya = Math.max(0, Math.min(y0, y1));
    const yb = Math.min(this.height - 1, Math.max(y0, y1));
    for (let y = ya; y <= yb; y++) {
      this.data.fill(value, y * this.width + xa, y * this.width + xb + 1);
    }
  }

  clear(): void {
    this.data.fill(0);
  }

  isEmpty(): boolean {
    return this.data.every((v) => v === 0);
  }

  selectedCount(): number {
    let n = 0;
    for (const v of this.data) if (v !== 0) n++;
    return n;
  }
}

/**
 * Render the mask into a canvas at native map resolution and return the
 * PNG data URI the edit endpoint expects. Selected pixels become opaque
 * white, everything else opaque black.
 */
export function maskToDataUri(
  mask: MaskGrid,
  makeCanvas: (w: number, h: number) => HTMLCanvasElement = (w, h) => {
    const c = document.createElement("canvas");
    c.width = w;
    c.height = h;
    return c;
  },
): string {
  const canvas = makeCanvas(mask.width, mask.height);
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas context unavailable");
  const img = ctx.createImageData(mask.width, mask.height);
  for (let i = 0; i < mask.data.length; i++) {
    const v = mask.data[i] ? 255 : 0;
    img.data[i * 4] = v;
    img.data[i * 4 + 1] = v;
    img.data[i * 4 + 2] = v;
    img.data[i * 4 + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
  return canvas.toDataURL("image/png");
}
