/**
 * Raw map payload parsing and readout formatting. The `.bin` endpoints
 * return one little-endian float32 per pixel, row major; no spectral math
 * happens here, only decoding.
 */

export function parseFloatMap(
  buf: ArrayBuffer,
  width: number,
  height: number,
): Float32Array {
  const expected = width * height * 4;
  if (buf.byteLength !== expected) {
    throw new Error(
      `map payload is ${buf.byteLength} bytes, expected ${expected}`,
    );
  }
  const view = new DataView(buf);
  const out = new Float32Array(width * height);
  for (let i = 0; i < out.length; i++) {
    out[i] = view.getFloat32(i * 4, true);
  }
  return out;
}

export function mapValueAt(
  data: Float32Array,
  width: number,
  x: number,
  y: number,
): number {
  return data[y * width + x];
}

/** Compact readout: fixed point for ordinary magnitudes, scientific
 *  notation for the tails. */
export function formatMapValue(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 0.001 && a < 10000) return v.toPrecision(4);
  return v.toExponential(2);
}

export const GALLERY_MAPS = [
  "i_d",
  "i_s",
  "f_mel",
  "f_blood",
  "probability",
] as const;

export type GalleryMap = (typeof GALLERY_MAPS)[number];
