/** Figure model: sample fan, ensemble mean, and exponential reference
 * lines, in data coordinates. Rendering backends consume this model, and
 * tests assert on it directly (reference slopes are carried exactly). */

import { coupledDistance, TrajectoryTable } from "./csv.js";

export interface Series {
  t: number[];
  v: number[];
}

export interface ReferenceLine {
  label: string;
  /** exact exponent nu: the line is anchor * exp(nu * t) */
  slope: number;
  anchor: number;
  points: Series;
}

export type Scale = "linear" | "semilog";

export interface PanelModel {
  scale: Scale;
  samples: Series[];
  mean: Series;
  references: ReferenceLine[];
}

export interface FigureModel {
  panels: PanelModel[];
  width: number;
  height: number;
}

export interface FigureSpec {
  mean: TrajectoryTable;
  samples: TrajectoryTable[];
  /** label -> exponent, e.g. { nu_av: -0.0761, nu_s: -0.3561 } */
  exponents: Record<string, number>;
  scale: Scale | "both";
  width?: number;
  height?: number;
}

export function buildFigure(spec: FigureSpec): FigureModel {
  if (spec.samples.length === 0) {
    throw new Error("no sample trajectories given; refusing to render an empty fan");
  }
  const mean = coupledDistance(spec.mean);
  const samples = spec.samples.map(coupledDistance);
  // references anchored at the mean's initial value
  const anchor = mean.v[0];
  const references = Object.entries(spec.exponents).map(([label, slope]) => ({
    label,
    slope,
    anchor,
    points: {
      t: [...mean.t],
      v: mean.t.map((time) => anchor * Math.exp(slope * time)),
    },
  }));
  const scales: Scale[] = spec.scale === "both" ? ["linear", "semilog"] : [spec.scale];
  const panels = scales.map((scale) => ({ scale, samples, mean, references }));
  return {
    panels,
    width: spec.width ?? 480 * panels.length,
    height: spec.height ?? 360,
  };
}
