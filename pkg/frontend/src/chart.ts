import * as fs from "fs";
import { PNG } from "pngjs";

export type RGB = [number, number, number];

export const PALETTE: RGB[] = [
  [31, 119, 180],
  [255, 127, 14],
  [44, 160, 44],
  [214, 39, 40],
  [148, 103, 189],
];

// 3x5 bitmap glyphs, one number per row (3 bits, msb = left pixel)
const GLYPHS: Record<string, number[]> = {
  "0": [7, 5, 5, 5, 7], "1": [2, 6, 2, 2, 7], "2": [7, 1, 7, 4, 7],
  "3": [7, 1, 7, 1, 7], "4": [5, 5, 7, 1, 1], "5": [7, 4, 7, 1, 7],
  "6": [7, 4, 7, 5, 7], "7": [7, 1, 1, 2, 2], "8": [7, 5, 7, 5, 7],
  "9": [7, 5, 7, 1, 7], ".": [0, 0, 0, 0, 2], "-": [0, 0, 7, 0, 0],
  " ": [0, 0, 0, 0, 0], "=": [0, 7, 0, 7, 0],
  a: [7, 5, 7, 5, 5], b: [6, 5, 6, 5, 6], c: [7, 4, 4, 4, 7],
  d: [6, 5, 5, 5, 6], e: [7, 4, 7, 4, 7], f: [7, 4, 7, 4, 4],
  g: [7, 4, 5, 5, 7], h: [5, 5, 7, 5, 5], i: [7, 2, 2, 2, 7],
  k: [5, 6, 4, 6, 5], l: [4, 4, 4, 4, 7], m: [5, 7, 7, 5, 5],
  n: [6, 5, 5, 5, 5], o: [7, 5, 5, 5, 7], p: [7, 5, 7, 4, 4],
  r: [7, 5, 6, 5, 5], s: [7, 4, 7, 1, 7], t: [7, 2, 2, 2, 2],
  u: [5, 5, 5, 5, 7], v: [5, 5, 5, 5, 2], w: [5, 5, 5, 7, 5],
  x: [5, 5, 2, 5, 5], y: [5, 5, 2, 2, 2], z: [7, 1, 2, 4, 7],
};

export class Canvas {
  readonly width: number;
  readonly height: number;
  readonly data: Buffer;

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.data = Buffer.alloc(width * height * 4, 255);
  }

  set(x: number, y: number, [r, g, b]: RGB): void {
    x = Math.round(x);
    y = Math.round(y);
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    const i = (y * this.width + x) * 4;
    this.data[i] = r;
    this.data[i + 1] = g;
    this.data[i + 2] = b;
    this.data[i + 3] = 255;
  }

  fillRect(x: number, y: number, w: number, h: number, color: RGB): void {
    for (let dy = 0; dy < h; dy++)
      for (let dx = 0; dx < w; dx++) this.set(x + dx, y + dy, color);
  }

  line(x0: number, y0: number, x1: number, y1: number, color: RGB,
       thick = 1): void {
    x0 = Math.round(x0); y0 = Math.round(y0);
    x1 = Math.round(x1); y1 = Math.round(y1);
    const dx = Math.abs(x1 - x0), dy = -Math.abs(y1 - y0);
    const sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    let err = dx + dy;
    for (;;) {
      this.fillRect(x0, y0, thick, thick, color);
      if (x0 === x1 && y0 === y1) break;
      const e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  text(x: number, y: number, str: string, color: RGB, scale = 2): void {
    let cx = x;
    for (const ch of str.toLowerCase()) {
      const glyph = GLYPHS[ch] ?? GLYPHS[" "];
      for (let row = 0; row < 5; row++)
        for (let col = 0; col < 3; col++)
          if (glyph[row] & (4 >> col))
            this.fillRect(cx + col * scale, y + row * scale, scale, scale, color);
      cx += 4 * scale;
    }
  }

  writePng(path: string): void {
    const png = new PNG({ width: this.width, height: this.height });
    this.data.copy(png.data);
    fs.writeFileSync(path, PNG.sync.write(png));
  }
}

export interface Series {
  label: string;
  points: Array<[number, number]>;
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
}

const W = 640;
const H = 400;
const MARGIN = { left: 70, right: 20, top: 40, bottom: 50 };

function bounds(series: Series[]): { x0: number; x1: number; y0: number; y1: number } {
  const xs = series.flatMap((s) => s.points.map((p) => p[0]));
  const ys = series.flatMap((s) => s.points.map((p) => p[1]));
  let x0 = Math.min(...xs), x1 = Math.max(...xs);
  let y0 = Math.min(0, ...ys), y1 = Math.max(...ys);
  if (x0 === x1) { x0 -= 1; x1 += 1; }  // degenerate single point
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  return { x0, x1, y0, y1 };
}

function fmt(value: number): string {
  if (Number.isInteger(value)) return String(value);
  return value.toFixed(Math.abs(value) < 1 ? 3 : 2);
}

/** Render a multi-series line chart to a PNG file. */
export function renderChart(spec: ChartSpec, path: string): void {
  const canvas = new Canvas(W, H);
  const black: RGB = [0, 0, 0];
  const grey: RGB = [200, 200, 200];
  const { x0, x1, y0, y1 } = bounds(spec.series);
  const px = (x: number) =>
    MARGIN.left + ((x - x0) / (x1 - x0)) * (W - MARGIN.left - MARGIN.right);
  const py = (y: number) =>
    H - MARGIN.bottom - ((y - y0) / (y1 - y0)) * (H - MARGIN.top - MARGIN.bottom);

  canvas.text(MARGIN.left, 12, spec.title, black);
  // gridlines + y tick labels
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4;
    canvas.line(MARGIN.left, py(y), W - MARGIN.right, py(y), grey);
    canvas.text(6, py(y) - 5, fmt(y), black);
  }
  // x ticks at each distinct x value
  const xticks = [...new Set(spec.series.flatMap((s) => s.points.map((p) => p[0])))]
    .sort((a, b) => a - b);
  for (const x of xticks) {
    canvas.line(px(x), H - MARGIN.bottom, px(x), H - MARGIN.bottom + 5, black);
    canvas.text(px(x) - 6, H - MARGIN.bottom + 10, fmt(x), black);
  }
  canvas.line(MARGIN.left, MARGIN.top, MARGIN.left, H - MARGIN.bottom, black);
  canvas.line(MARGIN.left, H - MARGIN.bottom, W - MARGIN.right, H - MARGIN.bottom, black);
  canvas.text(W / 2 - 4 * spec.xLabel.length, H - 18, spec.xLabel, black);
  canvas.text(6, MARGIN.top - 16, spec.yLabel, black);

  spec.series.forEach((series, idx) => {
    const color = PALETTE[idx % PALETTE.length];
    const pts = [...series.points].sort((a, b) => a[0] - b[0]);
    for (let i = 1; i < pts.length; i++) {
      canvas.line(px(pts[i - 1][0]), py(pts[i - 1][1]),
                  px(pts[i][0]), py(pts[i][1]), color, 2);
    }
    for (const [x, y] of pts) canvas.fillRect(px(x) - 2, py(y) - 2, 5, 5, color);
    // legend entry
    const ly = MARGIN.top + 4 + idx * 14;
    canvas.fillRect(W - MARGIN.right - 130, ly, 10, 10, color);
    canvas.text(W - MARGIN.right - 115, ly, series.label, black, 1.5 as number);
  });
  canvas.writePng(path);
}
