/** Minimal deterministic rasterizer and PNG codec (filter-0 RGBA).
 *
 * Enough for golden-image regression of polyline charts: integer line
 * drawing, no antialiasing, fixed palette, zlib via node:zlib. */

import { deflateSync, inflateSync } from "node:zlib";
import { FigureModel, PanelModel } from "./figure.js";
import { projectPanel, Viewport } from "./project.js";

export interface Raster {
  width: number;
  height: number;
  /** RGBA, row-major */
  data: Uint8Array;
}

export function makeRaster(width: number, height: number): Raster {
  const data = new Uint8Array(width * height * 4);
  data.fill(255);
  return { width, height, data };
}

export function setPixel(img: Raster, x: number, y: number, rgb: [number, number, number]): void {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  const k = (y * img.width + x) * 4;
  img.data[k] = rgb[0];
  img.data[k + 1] = rgb[1];
  img.data[k + 2] = rgb[2];
  img.data[k + 3] = 255;
}

export function drawLine(
  img: Raster,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  rgb: [number, number, number],
): void {
  // Bresenham on rounded endpoints
  let xa = Math.round(x0);
  let ya = Math.round(y0);
  const xb = Math.round(x1);
  const yb = Math.round(y1);
  const dx = Math.abs(xb - xa);
  const dy = -Math.abs(yb - ya);
  const sx = xa < xb ? 1 : -1;
  const sy = ya < yb ? 1 : -1;
  let err = dx + dy;
  for (;;) {
    setPixel(img, xa, ya, rgb);
    if (xa === xb && ya === yb) break;
    const e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      xa += sx;
    }
    if (e2 <= dx) {
      err += dx;
      ya += sy;
    }
  }
}

function drawPolyline(img: Raster, xs: number[], ys: number[], rgb: [number, number, number]): void {
  for (let i = 1; i < xs.length; i++) {
    drawLine(img, xs[i - 1], ys[i - 1], xs[i], ys[i], rgb);
  }
}

const GREY: [number, number, number] = [187, 187, 187];
const DARK: [number, number, number] = [102, 102, 102];
const BLACK: [number, number, number] = [0, 0, 0];

const MARGIN = { left: 58, right: 16, top: 30, bottom: 42 };

function rasterizePanel(img: Raster, panel: PanelModel, view: Viewport): void {
  const proj = projectPanel(panel, view);
  // frame
  drawLine(img, view.x0, view.y0, view.x0 + view.plotWidth, view.y0, BLACK);
  drawLine(
    img,
    view.x0,
    view.y0 + view.plotHeight,
    view.x0 + view.plotWidth,
    view.y0 + view.plotHeight,
    BLACK,
  );
  drawLine(img, view.x0, view.y0, view.x0, view.y0 + view.plotHeight, BLACK);
  drawLine(
    img,
    view.x0 + view.plotWidth,
    view.y0,
    view.x0 + view.plotWidth,
    view.y0 + view.plotHeight,
    BLACK,
  );
  for (const sample of panel.samples) {
    drawPolyline(img, sample.t.map(proj.x), sample.v.map(proj.y), GREY);
  }
  for (const ref of panel.references) {
    drawPolyline(img, ref.points.t.map(proj.x), ref.points.v.map(proj.y), DARK);
  }
  drawPolyline(img, panel.mean.t.map(proj.x), panel.mean.v.map(proj.y), BLACK);
}

export function rasterizeFigure(model: FigureModel): Raster {
  const img = makeRaster(model.width, model.height);
  const panelWidth = model.width / model.panels.length;
  model.panels.forEach((panel, index) => {
    const view: Viewport = {
      x0: Math.round(index * panelWidth + MARGIN.left),
      y0: MARGIN.top,
      plotWidth: Math.round(panelWidth - MARGIN.left - MARGIN.right),
      plotHeight: model.height - MARGIN.top - MARGIN.bottom,
    };
    rasterizePanel(img, panel, view);
  });
  return img;
}

// -- PNG ----------------------------------------------------------------------

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (const byte of buf) {
    c = CRC_TABLE[(c ^ byte) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, payload: Uint8Array): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(payload.length, 0);
  head.write(type, 4, "ascii");
  const crcInput = Buffer.concat([Buffer.from(type, "ascii"), Buffer.from(payload)]);
  const tail = Buffer.alloc(4);
  tail.writeUInt32BE(crc32(crcInput), 0);
  return Buffer.concat([head, Buffer.from(payload), tail]);
}

export function encodePng(img: Raster): Buffer {
  const signature = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(img.width, 0);
  ihdr.writeUInt32BE(img.height, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 6; // RGBA
  const stride = img.width * 4;
  const raw = Buffer.alloc((stride + 1) * img.height);
  for (let y = 0; y < img.height; y++) {
    raw[y * (stride + 1)] = 0; // filter 0
    raw.set(img.data.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const idat = deflateSync(raw, { level: 9 });
  return Buffer.concat([
    signature,
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

export function decodePng(buf: Buffer): Raster {
  if (buf.length < 8 || buf.readUInt32BE(0) !== 0x89504e47) {
    throw new Error("not a PNG file");
  }
  let offset = 8;
  let width = 0;
  let height = 0;
  const idatParts: Buffer[] = [];
  while (offset < buf.length) {
    const length = buf.readUInt32BE(offset);
    const type = buf.toString("ascii", offset + 4, offset + 8);
    const payload = buf.subarray(offset + 8, offset + 8 + length);
    if (type === "IHDR") {
      width = payload.readUInt32BE(0);
      height = payload.readUInt32BE(4);
      if (payload[8] !== 8 || payload[9] !== 6) {
        throw new Error("decoder supports 8-bit RGBA only");
      }
    } else if (type === "IDAT") {
      idatParts.push(Buffer.from(payload));
    }
    offset += 12 + length;
    if (type === "IEND") break;
  }
  const raw = inflateSync(Buffer.concat(idatParts));
  const stride = width * 4;
  const data = new Uint8Array(width * height * 4);
  for (let y = 0; y < height; y++) {
    if (raw[y * (stride + 1)] !== 0) {
      throw new Error("decoder supports filter 0 only");
    }
    data.set(raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1)), y * stride);
  }
  return { width, height, data };
}

/** Number of pixels whose RGBA differ between two rasters. */
export function pixelDiff(a: Raster, b: Raster): number {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error(`dimension mismatch: ${a.width}x${a.height} vs ${b.width}x${b.height}`);
  }
  let count = 0;
  for (let k = 0; k < a.data.length; k += 4) {
    if (
      a.data[k] !== b.data[k] ||
      a.data[k + 1] !== b.data[k + 1] ||
      a.data[k + 2] !== b.data[k + 2] ||
      a.data[k + 3] !== b.data[k + 3]
    ) {
      count++;
    }
  }
  return count;
}
