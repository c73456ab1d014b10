/** End-to-end rendering: CSV inputs to SVG (and optional PNG) outputs. */

import { readFileSync, writeFileSync } from "node:fs";
import { parseTrajectoryCsv } from "./csv.js";
import { buildFigure, FigureModel, Scale } from "./figure.js";
import { encodePng, rasterizeFigure } from "./raster.js";
import { renderSvg } from "./svg.js";

export interface RenderOptions {
  meanPath: string;
  samplePaths: string[];
  exponents: Record<string, number>;
  scale: Scale | "both";
  outPath: string;
  pngPath?: string;
  width?: number;
  height?: number;
}

export interface RenderResult {
  model: FigureModel;
  svg: string;
  files: string[];
}

export function render(options: RenderOptions): RenderResult {
  for (const value of Object.values(options.exponents)) {
    if (!Number.isFinite(value)) {
      throw new Error(`reference exponent must be finite, got ${value}`);
    }
  }
  const mean = parseTrajectoryCsv(readFileSync(options.meanPath, "utf-8"), options.meanPath);
  const samples = options.samplePaths.map((path) =>
    parseTrajectoryCsv(readFileSync(path, "utf-8"), path),
  );
  const model = buildFigure({
    mean,
    samples,
    exponents: options.exponents,
    scale: options.scale,
    width: options.width,
    height: options.height,
  });
  const svg = renderSvg(model);
  writeFileSync(options.outPath, svg);
  const files = [options.outPath];
  if (options.pngPath) {
    writeFileSync(options.pngPath, encodePng(rasterizeFigure(model)));
    files.push(options.pngPath);
  }
  return { model, svg, files };
}
