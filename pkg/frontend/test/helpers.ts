import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { syntheticCsv, writeSyntheticSet as writeSet } from "../src/synthetic.js";

export { syntheticCsv };

export function writeSyntheticSet(): { dir: string; mean: string; samples: string[] } {
  const dir = mkdtempSync(join(tmpdir(), "spinfilter-plots-"));
  return { dir, ...writeSet(dir) };
}
