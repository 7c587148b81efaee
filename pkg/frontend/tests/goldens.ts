/**
 * Canonical serialized scripts shared by the unit tests, the fixture
 * builder and the parity test. Each string is exactly what
 * `stateToScript` emits for the corresponding control state; the fixture
 * builder feeds the same bytes to the command line tool so previews can
 * be compared byte for byte.
 */

export const GOLDEN_EMPTY = "[]";

export const GOLDEN_MELANIN_075 =
  '[{"kind": "scale", "target": "f_mel", "value": 0.75}]';

export const GOLDEN_SPECULAR_OFF =
  '[{"kind": "set_constant", "target": "i_s", "value": 0}]';

export const GOLDEN_COMBO =
  '[{"kind": "scale", "target": "f_mel", "value": 0.75}, ' +
  '{"kind": "set_constant", "target": "i_s", "value": 0}]';

/** Fixture handoff file written by the global setup. */
export const FIXTURE_INFO = new URL("./.fixture.json", import.meta.url)
  .pathname;

export interface FixtureInfo {
  baseUrl: string;
  tmpDir: string;
  cubePath: string;
  decDir: string;
  width: number;
  height: number;
  maskAllUri: string;
  maskNoneUri: string;
  goldens: {
    renderReconstruction: string;
    editEmpty: string;
    editMelanin: string;
    editSpecular: string;
    editCombo: string;
  };
}
