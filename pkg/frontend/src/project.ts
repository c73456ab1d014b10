/** Shared data-to-pixel projection and tick layout for one panel. */

import { PanelModel, Series } from "./figure.js";

export interface Viewport {
  x0: number;
  y0: number;
  plotWidth: number;
  plotHeight: number;
}

export interface Projection {
  x(t: number): number;
  y(v: number): number;
  xTicks: number[];
  yTicks: number[];
  yLabel(v: number): string;
  tMin: number;
  tMax: number;
  vMin: number;
  vMax: number;
}

const SEMILOG_FLOOR = 1e-12;

function seriesValues(panel: PanelModel): { ts: number[]; vs: number[] } {
  const ts: number[] = [];
  const vs: number[] = [];
  const push = (s: Series) => {
    ts.push(...s.t);
    vs.push(...s.v);
  };
  panel.samples.forEach(push);
  push(panel.mean);
  panel.references.forEach((ref) => push(ref.points));
  return { ts, vs };
}

export function projectPanel(panel: PanelModel, view: Viewport): Projection {
  const { ts, vs } = seriesValues(panel);
  const tMin = Math.min(...ts);
  const tMax = Math.max(...ts);
  const semilog = panel.scale === "semilog";
  const positives = vs.filter((v) => v > SEMILOG_FLOOR);
  let vMin = semilog ? Math.min(...positives) : 0;
  let vMax = semilog ? Math.max(...positives) : Math.max(...vs);
  if (semilog) {
    vMin = Math.pow(10, Math.floor(Math.log10(vMin)));
    vMax = Math.pow(10, Math.ceil(Math.log10(vMax)));
  } else if (vMax <= 0) {
    vMax = 1;
  }
  const fwd = (v: number) => (semilog ? Math.log10(Math.max(v, SEMILOG_FLOOR)) : v);
  const lo = fwd(vMin);
  const hi = fwd(vMax);
  const span = hi - lo || 1;
  const x = (t: number) => view.x0 + ((t - tMin) / (tMax - tMin || 1)) * view.plotWidth;
  const y = (v: number) => view.y0 + view.plotHeight - ((fwd(v) - lo) / span) * view.plotHeight;

  const xTicks = Array.from({ length: 6 }, (_, k) => tMin + ((tMax - tMin) * k) / 5);
  let yTicks: number[];
  if (semilog) {
    const decades = Math.round(hi - lo);
    const step = Math.max(1, Math.ceil(decades / 6));
    yTicks = [];
    for (let d = Math.round(lo); d <= Math.round(hi); d += step) {
      yTicks.push(Math.pow(10, d));
    }
  } else {
    yTicks = Array.from({ length: 6 }, (_, k) => vMin + ((vMax - vMin) * k) / 5);
  }
  const yLabel = (v: number) =>
    semilog ? `1e${Math.round(Math.log10(v))}` : v.toPrecision(3).replace(/\.?0+$/, "");
  return { x, y, xTicks, yTicks, yLabel, tMin, tMax, vMin, vMax };
}
