/** Deterministic synthetic inputs for smoke tests and golden images. */

import { writeFileSync } from "node:fs";
import { join } from "node:path";

export function syntheticCsv(rate: number, amplitude = 0.5, tEnd = 10, dt = 0.1): string {
  const lines = ["t,dB_true_target,dB_filter_target"];
  const steps = Math.round(tEnd / dt);
  for (let k = 0; k <= steps; k++) {
    const t = k * dt;
    const v = amplitude * Math.exp(rate * t);
    lines.push(`${t.toFixed(6)},${v.toExponential(12)},${v.toExponential(12)}`);
  }
  return lines.join("\n") + "\n";
}

export function writeSyntheticSet(dir: string): { mean: string; samples: string[] } {
  const mean = join(dir, "mean.csv");
  writeFileSync(mean, syntheticCsv(-0.3));
  const samples = [-0.25, -0.3, -0.35].map((rate, i) => {
    const path = join(dir, `traj_00${i}.csv`);
    writeFileSync(path, syntheticCsv(rate, 0.45 + 0.05 * i));
    return path;
  });
  return { mean, samples };
}
