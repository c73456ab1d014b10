/** Strict reader for the simulator's trajectory/mean CSV schema. */

export interface TrajectoryTable {
  /** column name -> values, all rows parsed as numbers */
  columns: Map<string, number[]>;
  nRows: number;
}

/** Columns the renderer needs from every input file. */
export const REQUIRED_COLUMNS = ["t", "dB_true_target", "dB_filter_target"] as const;

export class SchemaError extends Error {}

export function parseTrajectoryCsv(text: string, source = "<csv>"): TrajectoryTable {
  const lines = text.split(/\r?\n/).filter((line) => line.trim().length > 0);
  if (lines.length < 2) {
    throw new SchemaError(`${source}: expected a header and at least one data row`);
  }
  const header = lines[0].split(",").map((name) => name.trim());
  const missing = REQUIRED_COLUMNS.filter((name) => !header.includes(name));
  if (missing.length > 0) {
    throw new SchemaError(`${source}: missing required columns: ${missing.join(", ")}`);
  }
  const columns = new Map<string, number[]>(header.map((name) => [name, []]));
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== header.length) {
      throw new SchemaError(
        `${source}: row ${i} has ${cells.length} cells, header has ${header.length}`,
      );
    }
    for (let j = 0; j < header.length; j++) {
      const value = Number(cells[j]);
      if (!Number.isFinite(value)) {
        throw new SchemaError(`${source}: row ${i}, column ${header[j]} is not a number`);
      }
      columns.get(header[j])!.push(value);
    }
  }
  return { columns, nRows: lines.length - 1 };
}

/** Coupled distance to the target pair: sum of the two target distances. */
export function coupledDistance(table: TrajectoryTable): { t: number[]; v: number[] } {
  const t = table.columns.get("t")!;
  const a = table.columns.get("dB_true_target")!;
  const b = table.columns.get("dB_filter_target")!;
  return { t: [...t], v: a.map((x, i) => x + b[i]) };
}
