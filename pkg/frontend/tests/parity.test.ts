/**
 * End-to-end parity against a live service over a real decomposition.
 * The reference images were produced by the command line tool from the
 * very script strings the UI serializes, so every comparison below is
 * byte exact: if the UI state machinery or the serializer drifts from
 * the service contract, something here breaks.
 */

import * as fs from "node:fs";
import { beforeAll, describe, expect, it } from "vitest";
import { ApiError, SkinspecClient, SessionMeta } from "../src/api.js";
import { defaultEditState, stateToScript } from "../src/editState.js";
import { parseFloatMap } from "../src/maps.js";
import { PreviewManager } from "../src/preview.js";
import {
  FIXTURE_INFO,
  FixtureInfo,
  GOLDEN_COMBO,
  GOLDEN_EMPTY,
  GOLDEN_MELANIN_075,
  GOLDEN_SPECULAR_OFF,
} from "./goldens.js";

let fixture: FixtureInfo;
let client: SkinspecClient;
let meta: SessionMeta;

function golden(p: string): Uint8Array {
  return new Uint8Array(fs.readFileSync(p));
}

function sameBytes(a: Uint8Array, b: Uint8Array): boolean {
  return Buffer.from(a).equals(Buffer.from(b));
}

function isPng(bytes: Uint8Array): boolean {
  return bytes.length > 8 && bytes[0] === 0x89 && bytes[1] === 0x50
    && bytes[2] === 0x4e && bytes[3] === 0x47;
}

beforeAll(async () => {
  fixture = JSON.parse(fs.readFileSync(FIXTURE_INFO, "utf-8"));
  client = new SkinspecClient(fixture.baseUrl);
  meta = await client.registerSession(fixture.decDir);
});

describe("session registration", () => {
  it("returns the decomposition geometry", () => {
    expect(meta.width).toBe(fixture.width);
    expect(meta.height).toBe(fixture.height);
    expect(meta.wavelengths).toHaveLength(meta.grid.count);
    expect(meta.views).toContain("reconstruction");
    expect(meta.views).toContain("input");
    for (const name of ["i_d", "i_s", "f_mel", "f_blood", "probability"]) {
      expect(meta.maps).toContain(name);
    }
  });

  it("rejects unknown sessions with a typed error", async () => {
    await expect(client.meta("not-a-session")).rejects.toMatchObject({
      name: "ApiError",
      status: 404,
    });
  });

  it("rejects scripts the serializer would never emit", async () => {
    const bad = '[{"kind": "scale", "target": "nope", "value": 2}]';
    await expect(client.edit(meta.id, bad)).rejects.toBeInstanceOf(ApiError);
  });
});

describe("preview parity with the command line renderer", () => {
  it("identity state matches the plain render byte for byte", async () => {
    const state = defaultEditState();
    expect(stateToScript(state)).toBe(GOLDEN_EMPTY);
    const ui = await client.edit(meta.id, stateToScript(state));
    expect(sameBytes(ui, golden(fixture.goldens.editEmpty))).toBe(true);
    expect(sameBytes(ui, golden(fixture.goldens.renderReconstruction)))
      .toBe(true);
    const served = await client.render(meta.id, "reconstruction");
    expect(sameBytes(ui, served)).toBe(true);
  });

  it("melanin slider at 0.75 matches the reference edit", async () => {
    const state = defaultEditState();
    state.melanin.scale = 0.75;
    expect(stateToScript(state)).toBe(GOLDEN_MELANIN_075);
    const ui = await client.edit(meta.id, stateToScript(state));
    expect(sameBytes(ui, golden(fixture.goldens.editMelanin))).toBe(true);
  });

  it("specular removal toggle matches the reference edit", async () => {
    const state = defaultEditState();
    state.removeSpecular = true;
    expect(stateToScript(state)).toBe(GOLDEN_SPECULAR_OFF);
    const ui = await client.edit(meta.id, stateToScript(state));
    expect(sameBytes(ui, golden(fixture.goldens.editSpecular))).toBe(true);
  });

  it("combined sliders match the reference edit", async () => {
    const state = defaultEditState();
    state.melanin.scale = 0.75;
    state.removeSpecular = true;
    expect(stateToScript(state)).toBe(GOLDEN_COMBO);
    const ui = await client.edit(meta.id, stateToScript(state));
    expect(sameBytes(ui, golden(fixture.goldens.editCombo))).toBe(true);
  });

  it("a select-all mask reproduces the unmasked edit", async () => {
    const state = defaultEditState();
    state.melanin.scale = 0.75;
    state.mask = fixture.maskAllUri;
    const ui = await client.edit(meta.id, stateToScript(state));
    expect(sameBytes(ui, golden(fixture.goldens.editMelanin))).toBe(true);
  });

  it("a select-none mask leaves the render untouched", async () => {
    const state = defaultEditState();
    state.melanin.scale = 0.75;
    state.mask = fixture.maskNoneUri;
    const ui = await client.edit(meta.id, stateToScript(state));
    expect(sameBytes(ui, golden(fixture.goldens.editEmpty))).toBe(true);
  });
});

describe("gallery endpoints", () => {
  it("serves all seven gallery images as PNG", async () => {
    const urls = [
      client.renderUrl(meta.id, "input"),
      client.renderUrl(meta.id, "reconstruction"),
      ...["i_d", "i_s", "f_mel", "f_blood", "probability"].map((n) =>
        client.mapPngUrl(meta.id, n),
      ),
    ];
    for (const url of urls) {
      const resp = await fetch(url);
      expect(resp.status).toBe(200);
      expect(resp.headers.get("content-type")).toBe("image/png");
      expect(isPng(new Uint8Array(await resp.arrayBuffer()))).toBe(true);
    }
  });

  it("serves raw maps the client can decode", async () => {
    const buf = await client.mapBin(meta.id, "probability");
    const probs = parseFloatMap(buf, meta.width, meta.height);
    expect(probs).toHaveLength(meta.width * meta.height);
    for (const p of probs) {
      expect(Number.isFinite(p)).toBe(true);
      expect(p).toBeGreaterThanOrEqual(0);
      expect(p).toBeLessThanOrEqual(1);
    }
  });
});

describe("pixel inspection", () => {
  it("returns aligned spectra and fitted parameters", async () => {
    const cx = Math.floor(meta.width / 2);
    const cy = Math.floor(meta.height / 2);
    const data = await client.spectrum(meta.id, cx, cy);
    expect(data.x).toBe(cx);
    expect(data.wavelengths).toHaveLength(meta.grid.count);
    expect(data.observed).toHaveLength(meta.grid.count);
    expect(data.reconstructed).toHaveLength(meta.grid.count);
    expect(["converged", "max-iter", "dark-pixel", "failed"])
      .toContain(data.params.status);
    for (const key of ["i_d", "i_s", "f_mel", "f_blood"] as const) {
      expect(Number.isFinite(data.params[key])).toBe(true);
    }
  });

  it("rejects out-of-range pixels", async () => {
    await expect(
      client.spectrum(meta.id, meta.width, 0),
    ).rejects.toMatchObject({ status: 422 });
  });
});

describe("debounced live preview against the real service", () => {
  it("a drag settles on the final slider value", async () => {
    let sends = 0;
    const images: Uint8Array[] = [];
    const errors: unknown[] = [];
    const manager = new PreviewManager({
      send: (script) => {
        sends++;
        return client.edit(meta.id, script);
      },
      onImage: (bytes) => images.push(bytes),
      onError: (err) => errors.push(err),
      debounceMs: 30,
    });

    // simulate a quick drag through three states
    manager.request(GOLDEN_EMPTY);
    manager.request(GOLDEN_MELANIN_075);
    manager.request(GOLDEN_COMBO);

    const deadline = Date.now() + 10_000;
    while (images.length === 0 && errors.length === 0
        && Date.now() < deadline) {
      await new Promise((r) => setTimeout(r, 20));
    }
    expect(errors).toHaveLength(0);
    expect(images.length).toBeGreaterThanOrEqual(1);
    expect(sends).toBe(1); // the burst collapsed into one request
    expect(sameBytes(images[images.length - 1],
      golden(fixture.goldens.editCombo))).toBe(true);
  });
});
