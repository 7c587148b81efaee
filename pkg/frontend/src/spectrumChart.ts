/**
 * Geometry for the pixel spectrum panel: maps wavelength/radiance series
 * into SVG polyline coordinates. Pure arithmetic, no DOM.
 */

export interface ChartLayout {
  width: number;
  height: number;
  marginLeft: number;
  marginRight: number;
  marginTop: number;
  marginBottom: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 420,
  height: 220,
  marginLeft: 46,
  marginRight: 10,
  marginTop: 10,
  marginBottom: 28,
};

export interface ChartGeometry {
  /** "x,y x,y ..." strings ready for <polyline points=...>. */
  observed: string;
  fitted: string;
  xTicks: { x: number; label: string }[];
  yTicks: { y: number; label: string }[];
  plotLeft: number;
  plotRight: number;
  plotTop: number;
  plotBottom: number;
}

function niceStep(span: number, target: number): number {
  const raw = span / Math.max(1, target);
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 5, 10]) {
    if (mag * m >= raw) return mag * m;
  }
  return mag * 10;
}

export function chartGeometry(
  wavelengths: number[],
  observed: number[],
  fitted: number[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): ChartGeometry {
  const n = wavelengths.length;
  if (n < 2 || observed.length !== n || fitted.length !== n) {
    throw new Error("spectrum series must share a length of at least 2");
  }
  const left = layout.marginLeft;
  const right = layout.width - layout.marginRight;
  const top = layout.marginTop;
  const bottom = layout.height - layout.marginBottom;

  const wMin = wavelengths[0];
  const wMax = wavelengths[n - 1];
  let vMax = 0;
  for (let i = 0; i < n; i++) {
    vMax = Math.max(vMax, observed[i], fitted[i]);
  }
  if (vMax <= 0) vMax = 1;
  // headroom so the peak does not sit on the frame
  vMax *= 1.05;

  const sx = (w: number) => left + ((w - wMin) / (wMax - wMin)) * (right - left);
  const sy = (v: number) => bottom - (v / vMax) * (bottom - top);

  const line = (ys: number[]) =>
    wavelengths
      .map((w, i) => `${sx(w).toFixed(1)},${sy(ys[i]).toFixed(1)}`)
      .join(" ");

  const xStep = niceStep(wMax - wMin, 6);
  const xTicks: { x: number; label: string }[] = [];
  for (let w = Math.ceil(wMin / xStep) * xStep; w <= wMax + 1e-9; w += xStep) {
    xTicks.push({ x: sx(w), label: `${Math.round(w)}` });
  }

  const yStep = niceStep(vMax, 4);
  const yTicks: { y: number; label: string }[] = [];
  for (let v = 0; v <= vMax + 1e-9; v += yStep) {
    yTicks.push({ y: sy(v), label: v === 0 ? "0" : v.toPrecision(2) });
  }

  return {
    observed: line(observed),
    fitted: line(fitted),
    xTicks,
    yTicks,
    plotLeft: left,
    plotRight: right,
    plotTop: top,
    plotBottom: bottom,
  };
}
