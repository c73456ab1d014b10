/** Deterministic SVG serialization of a figure model. */

import { FigureModel, PanelModel } from "./figure.js";
import { projectPanel, Projection, Viewport } from "./project.js";

const MARGIN = { left: 58, right: 16, top: 30, bottom: 42 };
const SAMPLE_STYLE = 'stroke="#bbbbbb" stroke-width="0.8" fill="none"';
const MEAN_STYLE = 'stroke="#000000" stroke-width="1.6" fill="none"';
const REF_STYLES = [
  'stroke="#888888" stroke-width="1.2" stroke-dasharray="6 3" fill="none"',
  'stroke="#444444" stroke-width="1.2" stroke-dasharray="2 3" fill="none"',
  'stroke="#666666" stroke-width="1.2" stroke-dasharray="8 2 2 2" fill="none"',
];

function fmt(x: number): string {
  return Number(x.toFixed(2)).toString();
}

function polyline(t: number[], v: number[], proj: Projection, style: string): string {
  const points = t.map((time, i) => `${fmt(proj.x(time))},${fmt(proj.y(v[i]))}`).join(" ");
  return `<polyline ${style} points="${points}"/>`;
}

function renderPanel(panel: PanelModel, view: Viewport, index: number): string {
  const proj = projectPanel(panel, view);
  const parts: string[] = [];
  parts.push(
    `<rect x="${view.x0}" y="${view.y0}" width="${view.plotWidth}" height="${view.plotHeight}" fill="none" stroke="#000000" stroke-width="1"/>`,
  );
  for (const tick of proj.xTicks) {
    const px = fmt(proj.x(tick));
    parts.push(
      `<line x1="${px}" y1="${view.y0 + view.plotHeight}" x2="${px}" y2="${view.y0 + view.plotHeight + 5}" stroke="#000000" stroke-width="1"/>`,
      `<text x="${px}" y="${view.y0 + view.plotHeight + 18}" font-size="11" text-anchor="middle" font-family="sans-serif">${Number(tick.toFixed(3))}</text>`,
    );
  }
  for (const tick of proj.yTicks) {
    const py = fmt(proj.y(tick));
    parts.push(
      `<line x1="${view.x0 - 5}" y1="${py}" x2="${view.x0}" y2="${py}" stroke="#000000" stroke-width="1"/>`,
      `<text x="${view.x0 - 8}" y="${Number(py) + 4}" font-size="11" text-anchor="end" font-family="sans-serif">${proj.yLabel(tick)}</text>`,
    );
  }
  for (const sample of panel.samples) {
    parts.push(polyline(sample.t, sample.v, proj, SAMPLE_STYLE));
  }
  panel.references.forEach((ref, k) => {
    parts.push(polyline(ref.points.t, ref.points.v, proj, REF_STYLES[k % REF_STYLES.length]));
  });
  parts.push(polyline(panel.mean.t, panel.mean.v, proj, MEAN_STYLE));
  // legend
  const legendX = view.x0 + 10;
  let legendY = view.y0 + 16;
  parts.push(
    `<text x="${legendX}" y="${legendY}" font-size="11" font-family="sans-serif">mean (black), samples (grey), ${panel.scale}</text>`,
  );
  panel.references.forEach((ref) => {
    legendY += 14;
    parts.push(
      `<text x="${legendX}" y="${legendY}" font-size="11" font-family="sans-serif">${ref.label} = ${ref.slope}, anchored at t=0 to the mean</text>`,
    );
  });
  parts.push(
    `<text x="${view.x0 + view.plotWidth / 2}" y="${view.y0 + view.plotHeight + 34}" font-size="12" text-anchor="middle" font-family="sans-serif">t</text>`,
  );
  return `<g id="panel-${index}">${parts.join("")}</g>`;
}

export function renderSvg(model: FigureModel): string {
  const panelWidth = model.width / model.panels.length;
  const panels = model.panels.map((panel, index) => {
    const view: Viewport = {
      x0: index * panelWidth + MARGIN.left,
      y0: MARGIN.top,
      plotWidth: panelWidth - MARGIN.left - MARGIN.right,
      plotHeight: model.height - MARGIN.top - MARGIN.bottom,
    };
    return renderPanel(panel, view, index);
  });
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${model.width}" height="${model.height}" viewBox="0 0 ${model.width} ${model.height}">` +
    `<rect width="${model.width}" height="${model.height}" fill="#ffffff"/>` +
    panels.join("") +
    `</svg>\n`
  );
}
