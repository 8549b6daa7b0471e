import { describe, expect, it } from "vitest";

import { layoutChart, renderChartSvg } from "./chart.js";
import type { WeeklyReport } from "./types.js";

const WEEK: WeeklyReport = {
  base_kwh: "13.9",
  max_kwh: "16.4",
  average_kwh: "15.18",
  series: [
    { day: "2019-01-01", kwh: "14.2" },
    { day: "2019-01-02", kwh: "15.6" },
    { day: "2019-01-03", kwh: "15.3" },
    { day: "2019-01-04", kwh: "16.4" },
    { day: "2019-01-05", kwh: "13.9" },
    { day: "2019-01-06", kwh: "14.7" },
    { day: "2019-01-07", kwh: "16.2" },
  ],
};

describe("layoutChart", () => {
  it("makes one bar per day with server labels", () => {
    const layout = layoutChart(WEEK);
    expect(layout.bars).toHaveLength(7);
    expect(layout.bars.map((b) => b.label)).toEqual([
      "14.2", "15.6", "15.3", "16.4", "13.9", "14.7", "16.2",
    ]);
  });

  it("scales bar heights with the data", () => {
    const layout = layoutChart(WEEK);
    const byDay = Object.fromEntries(layout.bars.map((b) => [b.day, b]));
    const min = byDay["2019-01-05"];
    const max = byDay["2019-01-04"];
    expect(max.height).toBeGreaterThan(min.height);
    expect(max.height / min.height).toBeCloseTo(16.4 / 13.9, 6);
  });

  it("places reference lines at base, average and max", () => {
    const layout = layoutChart(WEEK);
    const lines = Object.fromEntries(layout.refLines.map((l) => [l.name, l]));
    expect(lines.base.label).toBe("13.9");
    expect(lines.average.label).toBe("15.18");
    expect(lines.max.label).toBe("16.4");
    // y grows downward: max sits above average sits above base
    expect(lines.max.y).toBeLessThan(lines.average.y);
    expect(lines.average.y).toBeLessThan(lines.base.y);
  });

  it("aligns the max reference line with the tallest bar top", () => {
    const layout = layoutChart(WEEK);
    const tallest = layout.bars.find((b) => b.day === "2019-01-04")!;
    const maxLine = layout.refLines.find((l) => l.name === "max")!;
    expect(maxLine.y).toBeCloseTo(tallest.y, 6);
  });

  it("handles a single day with coincident lines", () => {
    const single: WeeklyReport = {
      base_kwh: "14.2",
      max_kwh: "14.2",
      average_kwh: "14.20",
      series: [{ day: "2019-01-01", kwh: "14.2" }],
    };
    const layout = layoutChart(single);
    expect(layout.bars).toHaveLength(1);
    const ys = layout.refLines.map((l) => l.y);
    expect(Math.max(...ys) - Math.min(...ys)).toBeCloseTo(0, 6);
  });

  it("survives an empty series", () => {
    const empty: WeeklyReport = {
      base_kwh: "0.0",
      max_kwh: "0.0",
      average_kwh: "0.00",
      series: [],
    };
    const layout = layoutChart(empty);
    expect(layout.bars).toHaveLength(0);
    expect(layout.yMax).toBeGreaterThan(0);
  });
});

describe("renderChartSvg", () => {
  it("emits the verbatim labels into the SVG", () => {
    const svg = renderChartSvg(layoutChart(WEEK));
    expect(svg).toContain("<svg");
    for (const label of ["14.2", "16.4", "base 13.9", "average 15.18", "max 16.4"]) {
      expect(svg).toContain(label);
    }
    expect((svg.match(/<rect/g) ?? []).length).toBe(7);
    expect((svg.match(/<line/g) ?? []).length).toBe(3);
  });
});
