import type { SeriesPoint } from "./store.js";

export interface ChartGeometry {
  width: number;
  height: number;
  pad: number;
}

const DEFAULT_GEOMETRY: ChartGeometry = { width: 260, height: 64, pad: 4 };

/** Polyline points attribute for a series, scaled into the chart box. */
export function polylinePoints(
  series: SeriesPoint[],
  geometry: ChartGeometry = DEFAULT_GEOMETRY,
): string {
  if (series.length === 0) return "";
  const { width, height, pad } = geometry;
  const xs = series.map((p) => p.step);
  const ys = series.map((p) => p.value);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;
  return series
    .map((p) => {
      const px = pad + ((p.step - xMin) / xSpan) * (width - 2 * pad);
      const py = height - pad - ((p.value - yMin) / ySpan) * (height - 2 * pad);
      return `${px.toFixed(1)},${py.toFixed(1)}`;
    })
    .join(" ");
}

export function sparklineSvg(
  series: SeriesPoint[],
  geometry: ChartGeometry = DEFAULT_GEOMETRY,
): string {
  const { width, height } = geometry;
  const points = polylinePoints(series, geometry);
  const line = points
    ? `<polyline points="${points}" fill="none" stroke="currentColor" stroke-width="1.5"/>`
    : "";
  return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">${line}</svg>`;
}
