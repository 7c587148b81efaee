/**
 * The single source of truth for pending edits. Slider positions and
 * toggles live here; ops are derived on demand, skipping anything that
 * would be an identity so that "all sliders home" serializes to the empty
 * script and previews exactly match the plain render.
 */

import { EditOp, EditTarget, serializeScript } from "./editScript.js";

export interface ChromophoreControls {
  scale: number;
  offset: number;
}

export interface UiEditState {
  melanin: ChromophoreControls;
  haemoglobin: ChromophoreControls;
  /** Odd median window on diffuse shading, or null when off. */
  diffuseMedian: number | null;
  /** Clamp specular shading to zero everywhere (in the masked region). */
  removeSpecular: boolean;
  /** Active painted region as a PNG data URI; null edits everywhere. */
  mask: string | null;
}

export function defaultEditState(): UiEditState {
  return {
    melanin: { scale: 1.0, offset: 0.0 },
    haemoglobin: { scale: 1.0, offset: 0.0 },
    diffuseMedian: null,
    removeSpecular: false,
    mask: null,
  };
}

export function isIdentity(state: UiEditState): boolean {
  return stateToOps(state).length === 0;
}

function pushChromophore(
  ops: EditOp[],
  target: EditTarget,
  controls: ChromophoreControls,
): void {
  if (controls.scale !== 1.0) {
    ops.push({ target, kind: "scale", value: controls.scale });
  }
  if (controls.offset !== 0.0) {
    ops.push({ target, kind: "offset", value: controls.offset });
  }
}

/** Derive ops in a fixed order; the active mask applies to every op. */
export function stateToOps(state: UiEditState): EditOp[] {
  const ops: EditOp[] = [];
  pushChromophore(ops, "f_mel", state.melanin);
  pushChromophore(ops, "f_blood", state.haemoglobin);
  if (state.diffuseMedian !== null) {
    ops.push({ target: "i_d", kind: "median_filter", value: state.diffuseMedian });
  }
  if (state.removeSpecular) {
    ops.push({ target: "i_s", kind: "set_constant", value: 0 });
  }
  if (state.mask !== null) {
    for (const op of ops) op.mask = state.mask;
  }
  return ops;
}

export function stateToScript(state: UiEditState): string {
  return serializeScript(stateToOps(state));
}
