import { describe, expect, it } from "vitest";
import { validateScript } from "../src/editScript.js";
import {
  defaultEditState,
  isIdentity,
  stateToOps,
  stateToScript,
} from "../src/editState.js";
import {
  GOLDEN_COMBO,
  GOLDEN_EMPTY,
  GOLDEN_MELANIN_075,
  GOLDEN_SPECULAR_OFF,
} from "./goldens.js";

const MASK = "data:image/png;base64,iVBORw0KGgo=";

describe("stateToScript", () => {
  it("serializes the home position as the empty script", () => {
    const state = defaultEditState();
    expect(isIdentity(state)).toBe(true);
    expect(stateToScript(state)).toBe(GOLDEN_EMPTY);
  });

  it("emits the canonical single-op scripts", () => {
    const mel = defaultEditState();
    mel.melanin.scale = 0.75;
    expect(stateToScript(mel)).toBe(GOLDEN_MELANIN_075);

    const spec = defaultEditState();
    spec.removeSpecular = true;
    expect(stateToScript(spec)).toBe(GOLDEN_SPECULAR_OFF);
  });

  it("orders ops melanin, haemoglobin, diffuse, specular", () => {
    const state = defaultEditState();
    state.melanin.scale = 0.75;
    state.removeSpecular = true;
    expect(stateToScript(state)).toBe(GOLDEN_COMBO);

    state.melanin.offset = 0.01;
    state.haemoglobin.scale = 1.3;
    state.diffuseMedian = 3;
    const kinds = stateToOps(state).map((op) => `${op.target}:${op.kind}`);
    expect(kinds).toEqual([
      "f_mel:scale",
      "f_mel:offset",
      "f_blood:scale",
      "i_d:median_filter",
      "i_s:set_constant",
    ]);
  });

  it("attaches the active mask to every derived op", () => {
    const state = defaultEditState();
    state.melanin.scale = 1.5;
    state.haemoglobin.offset = -0.005;
    state.mask = MASK;
    const ops = stateToOps(state);
    expect(ops).toHaveLength(2);
    for (const op of ops) expect(op.mask).toBe(MASK);
  });

  it("a mask alone is still the identity", () => {
    const state = defaultEditState();
    state.mask = MASK;
    expect(stateToScript(state)).toBe(GOLDEN_EMPTY);
  });

  it("every reachable slider state serializes to a valid script", () => {
    // walk the control grid the way the sliders expose it
    const melScales = [0, 0.25, 0.75, 1.0, 1.5, 2.0];
    const offsets = [-0.02, 0, 0.01];
    const medians = [null, 3, 5, 9];
    const speculars = [false, true];
    let states = 0;
    for (const ms of melScales)
      for (const off of offsets)
        for (const med of medians)
          for (const sp of speculars) {
            const state = defaultEditState();
            state.melanin.scale = ms;
            state.haemoglobin.offset = off;
            state.diffuseMedian = med;
            state.removeSpecular = sp;
            const ops = stateToOps(state);
            expect(() => validateScript(ops)).not.toThrow();
            // no identity op ever reaches the wire
            for (const op of ops) {
              if (op.kind === "scale") expect(op.value).not.toBe(1.0);
              if (op.kind === "offset") expect(op.value).not.toBe(0.0);
            }
            states++;
          }
    expect(states).toBe(melScales.length * offsets.length
      * medians.length * speculars.length);
  });

  it("identical states produce byte-identical scripts", () => {
    const a = defaultEditState();
    a.melanin.scale = 0.75;
    a.diffuseMedian = 5;
    a.mask = MASK;
    const b = defaultEditState();
    b.melanin.scale = 0.75;
    b.diffuseMedian = 5;
    b.mask = MASK;
    expect(stateToScript(a)).toBe(stateToScript(b));
  });
});
