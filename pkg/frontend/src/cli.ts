#!/usr/bin/env node
/** Standalone renderer:
 *
 *   spinfilter-render render --mean mean.csv --samples 'traj_*.csv' \
 *     --nu-av -0.0761 --nu-s -0.3561 --scale both --out fig1.svg [--png fig1.png]
 */

import { readdirSync } from "node:fs";
import { basename, dirname, join } from "node:path";
import { render } from "./render.js";
import { Scale } from "./figure.js";

function expandGlob(pattern: string): string[] {
  if (!pattern.includes("*")) {
    return [pattern];
  }
  const dir = dirname(pattern);
  const name = basename(pattern);
  const regex = new RegExp(
    "^" + name.split("*").map(escapeRegex).join(".*") + "$",
  );
  return readdirSync(dir)
    .filter((entry) => regex.test(entry))
    .sort()
    .map((entry) => join(dir, entry));
}

function escapeRegex(s: string): string {
  return s.replace(/[.*+?^${}()|[\]\\]/g, "\\$&");
}

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) {
      throw new Error(`unexpected argument ${arg}`);
    }
    const value = argv[i + 1];
    if (value === undefined) {
      throw new Error(`flag ${arg} needs a value`);
    }
    out.set(arg.slice(2), value);
    i++;
  }
  return out;
}

export function main(argv: string[]): number {
  try {
    if (argv[0] !== "render") {
      throw new Error("usage: spinfilter-render render --mean <csv> --samples <glob> --out <svg> [--nu-av X] [--nu-s Y] [--scale linear|semilog|both] [--png <png>]");
    }
    const args = parseArgs(argv.slice(1));
    const meanPath = args.get("mean");
    const samplesPattern = args.get("samples");
    const outPath = args.get("out");
    if (!meanPath || !samplesPattern || !outPath) {
      throw new Error("--mean, --samples and --out are required");
    }
    const exponents: Record<string, number> = {};
    if (args.has("nu-av")) exponents["nu_av"] = Number(args.get("nu-av"));
    if (args.has("nu-s")) exponents["nu_s"] = Number(args.get("nu-s"));
    const scale = (args.get("scale") ?? "both") as Scale | "both";
    if (!["linear", "semilog", "both"].includes(scale)) {
      throw new Error(`unknown scale ${scale}`);
    }
    const result = render({
      meanPath,
      samplePaths: expandGlob(samplesPattern),
      exponents,
      scale,
      outPath,
      pngPath: args.get("png"),
    });
    for (const file of result.files) {
      console.log(`wrote ${file}`);
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("spinfilter-render")) {
  process.exit(main(process.argv.slice(2)));
}
