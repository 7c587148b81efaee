/**
 * Edit script types, validation and serialization.
 *
 * The script format is the service's wire contract: a JSON list of ops
 * applied in order to the fitted maps. Validation here mirrors the
 * server-side rules so bad slider states are caught before a request is
 * made; the server remains the authority.
 */

export type EditTarget = "f_mel" | "f_blood" | "i_d" | "i_s";
export type EditKind = "scale" | "offset" | "median_filter" | "set_constant";

export interface EditOp {
  target: EditTarget;
  kind: EditKind;
  value: number;
  /** PNG data URI restricting the op to painted pixels (>= 128 selects). */
  mask?: string;
}

export const TARGETS: readonly EditTarget[] = ["f_mel", "f_blood", "i_d", "i_s"];

/** Feasible value boxes, matching the ranges the service advertises in
 *  /meta. Shading maps are unbounded above. */
export const TARGET_RANGES: Record<EditTarget, [number, number | null]> = {
  f_mel: [0.013, 0.43],
  f_blood: [0.02, 0.07],
  i_d: [0.0, null],
  i_s: [0.0, null],
};

export class ScriptValidationError extends Error {}

function fail(index: number, message: string): never {
  throw new ScriptValidationError(`op ${index}: ${message}`);
}

export function validateOp(op: EditOp, index = 0): void {
  if (!TARGETS.includes(op.target)) fail(index, `unknown target ${op.target}`);
  if (!Number.isFinite(op.value)) fail(index, "value must be a finite number");
  switch (op.kind) {
    case "scale":
      if (op.value < 0) fail(index, "scale must be non-negative");
      break;
    case "offset":
      break;
    case "median_filter":
      if (!Number.isInteger(op.value) || op.value < 3 || op.value % 2 === 0) {
        fail(index, "median window must be an odd integer >= 3");
      }
      break;
    case "set_constant": {
      const [lo, hi] = TARGET_RANGES[op.target];
      if (op.value < lo || (hi !== null && op.value > hi)) {
        fail(index, `constant ${op.value} outside [${lo}, ${hi ?? "inf"}]`);
      }
      break;
    }
    default:
      fail(index, `unknown kind ${(op as EditOp).kind}`);
  }
  if (op.mask !== undefined && !op.mask.startsWith("data:image/png;base64,")) {
    fail(index, "mask must be a PNG data URI");
  }
}

export function validateScript(ops: EditOp[]): void {
  ops.forEach((op, i) => validateOp(op, i));
}

/**
 * Serialize with stable alphabetical key order and Python-style
 * separators, so identical UI states always produce byte-identical
 * request bodies.
 */
export function serializeScript(ops: EditOp[]): string {
  validateScript(ops);
  const entries = ops.map((op) => {
    const fields: [string, string][] = [["kind", JSON.stringify(op.kind)]];
    if (op.mask !== undefined) fields.push(["mask", JSON.stringify(op.mask)]);
    fields.push(["target", JSON.stringify(op.target)]);
    fields.push(["value", String(op.value)]);
    return "{" + fields.map(([k, v]) => `"${k}": ${v}`).join(", ") + "}";
  });
  return "[" + entries.join(", ") + "]";
}
