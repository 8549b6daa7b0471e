import type { WeeklyReport } from "./types.js";

/** Consumption chart geometry and SVG rendering.
 *
 * Layout is computed as plain data first so tests can check bar heights
 * and reference-line positions without a renderer. Numeric parsing here
 * is for geometry only; labels reuse the server's strings verbatim.
 */

export interface Bar {
  day: string;
  label: string; // server-formatted kWh
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface RefLine {
  name: "base" | "average" | "max";
  label: string;
  y: number;
}

export interface ChartLayout {
  width: number;
  height: number;
  bars: Bar[];
  refLines: RefLine[];
  yMax: number;
}

const MARGIN = { top: 16, right: 70, bottom: 28, left: 10 };

export function layoutChart(
  report: WeeklyReport,
  width = 640,
  height = 280,
): ChartLayout {
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;
  const values = report.series.map((p) => Number(p.kwh));
  const refs: [RefLine["name"], string][] = [
    ["base", report.base_kwh],
    ["average", report.average_kwh],
    ["max", report.max_kwh],
  ];
  const yMax = Math.max(...values, ...refs.map(([, v]) => Number(v)), 0) * 1.1 || 1;
  const toY = (v: number) => MARGIN.top + plotH * (1 - v / yMax);

  const n = report.series.length;
  const slot = plotW / Math.max(n, 1);
  const barW = slot * 0.6;
  const bars = report.series.map((p, i) => {
    const v = Number(p.kwh);
    return {
      day: p.day,
      label: p.kwh,
      x: MARGIN.left + slot * i + (slot - barW) / 2,
      y: toY(v),
      width: barW,
      height: plotH * (v / yMax),
    };
  });
  const refLines = refs.map(([name, label]) => ({
    name,
    label,
    y: toY(Number(label)),
  }));
  return { width, height, bars, refLines, yMax };
}

const REF_COLOR: Record<RefLine["name"], string> = {
  base: "#2e7d32",
  average: "#f9a825",
  max: "#c62828",
};

export function renderChartSvg(layout: ChartLayout): string {
  const parts: string[] = [
    `<svg viewBox="0 0 ${layout.width} ${layout.height}" ` +
      `xmlns="http://www.w3.org/2000/svg" role="img">`,
  ];
  for (const bar of layout.bars) {
    parts.push(
      `<rect x="${bar.x.toFixed(1)}" y="${bar.y.toFixed(1)}" ` +
        `width="${bar.width.toFixed(1)}" height="${bar.height.toFixed(1)}" ` +
        `fill="#1565c0"/>`,
      `<text x="${(bar.x + bar.width / 2).toFixed(1)}" ` +
        `y="${(layout.height - 10).toFixed(1)}" ` +
        `text-anchor="middle" font-size="11">${bar.day.slice(5)}</text>`,
      `<text x="${(bar.x + bar.width / 2).toFixed(1)}" ` +
        `y="${(bar.y - 4).toFixed(1)}" ` +
        `text-anchor="middle" font-size="11">${bar.label}</text>`,
    );
  }
  for (const line of layout.refLines) {
    const color = REF_COLOR[line.name];
    parts.push(
      `<line x1="0" x2="${layout.width - 64}" ` +
        `y1="${line.y.toFixed(1)}" y2="${line.y.toFixed(1)}" ` +
        `stroke="${color}" stroke-dasharray="6 3"/>`,
      `<text x="${layout.width - 60}" y="${(line.y + 4).toFixed(1)}" ` +
        `font-size="11" fill="${color}">${line.name} ${line.label}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
