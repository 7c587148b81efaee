/**
 * Browser app glue: wires the edit controls, gallery, mask painter and
 * spectrum panel to the HTTP service. All heavy lifting stays server
 * side; this file only moves state around and swaps image bytes in.
 */

import { SkinspecClient, ApiError, SessionMeta } from "./api.js";
import {
  UiEditState,
  defaultEditState,
  isIdentity,
  stateToScript,
} from "./editState.js";
import { PreviewManager } from "./preview.js";
import { MaskGrid, maskToDataUri } from "./mask.js";
import { parseFloatMap, mapValueAt, formatMapValue } from "./maps.js";
import { chartGeometry } from "./spectrumChart.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function must<T extends Element>(root: ParentNode, selector: string): T {
  const el = root.querySelector(selector);
  if (!el) throw new Error(`missing element ${selector}`);
  return el as T;
}

function bytesToObjectUrl(bytes: Uint8Array): string {
  // slice() pins the data to a plain ArrayBuffer, which Blob requires
  return URL.createObjectURL(new Blob([bytes.slice()], { type: "image/png" }));
}

interface Gallery {
  container: HTMLElement;
  setImage(key: string, url: string, caption: string): void;
  onPick(handler: (x: number, y: number) => void): void;
}

function buildGallery(container: HTMLElement, meta: SessionMeta): Gallery {
  container.textContent = "";
  const images = new Map<string, HTMLImageElement>();
  let pick: ((x: number, y: number) => void) | null = null;

  const add = (key: string) => {
    const fig = document.createElement("figure");
    const img = document.createElement("img");
    img.width = meta.width;
    img.height = meta.height;
    img.alt = key;
    const cap = document.createElement("figcaption");
    cap.textContent = key;
    fig.append(img, cap);
    container.append(fig);
    images.set(key, img);
    img.addEventListener("click", (ev) => {
      if (!pick) return;
      const rect = img.getBoundingClientRect();
      const x = Math.floor(((ev.clientX - rect.left) / rect.width) * meta.width);
      const y = Math.floor(((ev.clientY - rect.top) / rect.height) * meta.height);
      pick(
        Math.min(meta.width - 1, Math.max(0, x)),
        Math.min(meta.height - 1, Math.max(0, y)),
      );
    });
  };

  for (const key of ["input", "reconstruction", "i_d", "i_s", "f_mel", "f_blood", "probability"]) {
    add(key);
  }

  return {
    container,
    setImage(key, url, caption) {
      const img = images.get(key);
      if (!img) return;
      const old = img.src;
      img.src = url;
      const fig = img.parentElement as HTMLElement;
      (fig.querySelector("figcaption") as HTMLElement).textContent = caption;
      if (old.startsWith("blob:")) URL.revokeObjectURL(old);
    },
    onPick(handler) {
      pick = handler;
    },
  };
}

interface SessionUi {
  client: SkinspecClient;
  meta: SessionMeta;
  state: UiEditState;
  mask: MaskGrid;
  preview: PreviewManager;
  bins: Map<string, Float32Array>;
}

export function startApp(root: ParentNode = document): void {
  const baseInput = must<HTMLInputElement>(root, "#service-url");
  const pathInput = must<HTMLInputElement>(root, "#session-path");
  const connectBtn = must<HTMLButtonElement>(root, "#connect");
  const noticeBar = must<HTMLElement>(root, "#notice");
  const galleryEl = must<HTMLElement>(root, "#gallery");
  const editsEl = must<HTMLElement>(root, "#edits");
  const previewImg = must<HTMLImageElement>(root, "#preview");
  const previewState = must<HTMLElement>(root, "#preview-state");
  const maskCanvas = must<HTMLCanvasElement>(root, "#mask-canvas");
  const maskInfo = must<HTMLElement>(root, "#mask-info");
  const brushInput = must<HTMLInputElement>(root, "#brush");
  const maskClear = must<HTMLButtonElement>(root, "#mask-clear");
  const spectrumPanel = must<HTMLElement>(root, "#spectrum-panel");

  baseInput.value ||= window.location.origin;

  let session: SessionUi | null = null;

  function notify(message: string, kind: "error" | "info" = "error"): void {
    noticeBar.textContent = message;
    noticeBar.dataset.kind = kind;
    noticeBar.hidden = false;
  }
  noticeBar.addEventListener("click", () => {
    noticeBar.hidden = true;
  });

  function describe(err: unknown): string {
    if (err instanceof ApiError) return `service: ${err.message}`;
    return err instanceof Error ? err.message : String(err);
  }

  // ---- edit controls ------------------------------------------------

  interface SliderSpec {
    id: string;
    label: string;
    min: number;
    max: number;
    step: number;
    value: number;
    apply: (state: UiEditState, v: number) => void;
  }

  const sliders: SliderSpec[] = [
    { id: "mel-scale", label: "melanin scale", min: 0, max: 2, step: 0.05,
      value: 1, apply: (s, v) => { s.melanin.scale = v; } },
    { id: "mel-offset", label: "melanin offset", min: -0.1, max: 0.1,
      step: 0.005, value: 0, apply: (s, v) => { s.melanin.offset = v; } },
    { id: "blood-scale", label: "haemoglobin scale", min: 0, max: 2,
      step: 0.05, value: 1, apply: (s, v) => { s.haemoglobin.scale = v; } },
    { id: "blood-offset", label: "haemoglobin offset", min: -0.02, max: 0.02,
      step: 0.001, value: 0, apply: (s, v) => { s.haemoglobin.offset = v; } },
  ];

  function buildControls(onChange: () => void): void {
    editsEl.textContent = "";
    for (const spec of sliders) {
      const row = document.createElement("label");
      row.className = "slider-row";
      const name = document.createElement("span");
      name.textContent = spec.label;
      const input = document.createElement("input");
      input.type = "range";
      input.id = spec.id;
      input.min = String(spec.min);
      input.max = String(spec.max);
      input.step = String(spec.step);
      input.value = String(spec.value);
      const readout = document.createElement("output");
      readout.textContent = input.value;
      input.addEventListener("input", () => {
        if (!session) return;
        spec.apply(session.state, Number(input.value));
        readout.textContent = input.value;
        onChange();
      });
      row.append(name, input, readout);
      editsEl.append(row);
    }

    const median = document.createElement("label");
    median.className = "toggle-row";
    const medianBox = document.createElement("input");
    medianBox.type = "checkbox";
    medianBox.id = "median-toggle";
    median.append(medianBox, document.createTextNode(" median filter diffuse (5x5)"));
    medianBox.addEventListener("change", () => {
      if (!session) return;
      session.state.diffuseMedian = medianBox.checked ? 5 : null;
      onChange();
    });

    const spec = document.createElement("label");
    spec.className = "toggle-row";
    const specBox = document.createElement("input");
    specBox.type = "checkbox";
    specBox.id = "specular-toggle";
    spec.append(specBox, document.createTextNode(" remove specular highlights"));
    specBox.addEventListener("change", () => {
      if (!session) return;
      session.state.removeSpecular = specBox.checked;
      onChange();
    });

    const reset = document.createElement("button");
    reset.type = "button";
    reset.textContent = "reset edits";
    reset.addEventListener("click", () => {
      if (!session) return;
      session.state = defaultEditState();
      session.mask.clear();
      syncMaskState();
      buildControls(onChange);
      onChange();
    });

    editsEl.append(median, spec, reset);
  }

  // ---- mask painting ------------------------------------------------

  let painting = false;

  function drawMaskOverlay(): void {
    if (!session) return;
    const ctx = maskCanvas.getContext("2d");
    if (!ctx) return;
    const img = ctx.createImageData(session.mask.width, session.mask.height);
    for (let i = 0; i < session.mask.data.length; i++) {
      const on = session.mask.data[i] !== 0;
      img.data[i * 4] = 255;
      img.data[i * 4 + 1] = 64;
      img.data[i * 4 + 2] = 64;
      img.data[i * 4 + 3] = on ? 110 : 0;
    }
    ctx.putImageData(img, 0, 0);
  }

  function syncMaskState(): void {
    if (!session) return;
    const n = session.mask.selectedCount();
    session.state.mask = session.mask.isEmpty()
      ? null
      : maskToDataUri(session.mask);
    maskInfo.textContent = n
      ? `${n} px selected; edits apply inside the region`
      : "no region selected; edits apply everywhere";
    drawMaskOverlay();
  }

  function canvasPixel(ev: MouseEvent): [number, number] | null {
    if (!session) return null;
    const rect = maskCanvas.getBoundingClientRect();
    const x = Math.floor(((ev.clientX - rect.left) / rect.width) * session.mask.width);
    const y = Math.floor(((ev.clientY - rect.top) / rect.height) * session.mask.height);
    if (x < 0 || y < 0 || x >= session.mask.width || y >= session.mask.height) {
      return null;
    }
    return [x, y];
  }

  maskCanvas.addEventListener("mousedown", (ev) => {
    painting = true;
    const px = canvasPixel(ev);
    if (px && session) {
      session.mask.paintDisc(px[0], px[1], Number(brushInput.value));
      drawMaskOverlay();
    }
  });
  maskCanvas.addEventListener("mousemove", (ev) => {
    if (!painting) return;
    const px = canvasPixel(ev);
    if (px && session) {
      session.mask.paintDisc(px[0], px[1], Number(brushInput.value));
      drawMaskOverlay();
    }
  });
  const finishStroke = () => {
    if (!painting) return;
    painting = false;
    syncMaskState();
    schedulePreview();
  };
  maskCanvas.addEventListener("mouseup", finishStroke);
  maskCanvas.addEventListener("mouseleave", finishStroke);
  maskClear.addEventListener("click", () => {
    if (!session) return;
    session.mask.clear();
    syncMaskState();
    schedulePreview();
  });

  // ---- preview ------------------------------------------------------

  function schedulePreview(): void {
    if (!session) return;
    previewState.textContent = "updating";
    session.preview.request(stateToScript(session.state));
  }

  function showPreview(bytes: Uint8Array): void {
    const old = previewImg.src;
    previewImg.src = bytesToObjectUrl(bytes);
    previewState.textContent = session && isIdentity(session.state)
      ? "identity (matches base render)"
      : "edited";
    if (old.startsWith("blob:")) URL.revokeObjectURL(old);
  }

  // ---- spectrum panel -----------------------------------------------

  function renderSpectrum(
    panel: HTMLElement,
    data: Awaited<ReturnType<SkinspecClient["spectrum"]>>,
  ): void {
    panel.textContent = "";
    const geo = chartGeometry(data.wavelengths, data.observed, data.reconstructed);
    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", "0 0 420 220");
    svg.setAttribute("class", "spectrum-chart");

    const frame = document.createElementNS(SVG_NS, "rect");
    frame.setAttribute("x", String(geo.plotLeft));
    frame.setAttribute("y", String(geo.plotTop));
    frame.setAttribute("width", String(geo.plotRight - geo.plotLeft));
    frame.setAttribute("height", String(geo.plotBottom - geo.plotTop));
    frame.setAttribute("class", "chart-frame");
    svg.append(frame);

    for (const tick of geo.xTicks) {
      const t = document.createElementNS(SVG_NS, "text");
      t.setAttribute("x", String(tick.x));
      t.setAttribute("y", String(geo.plotBottom + 16));
      t.setAttribute("class", "tick tick-x");
      t.textContent = tick.label;
      svg.append(t);
    }
    for (const tick of geo.yTicks) {
      const t = document.createElementNS(SVG_NS, "text");
      t.setAttribute("x", String(geo.plotLeft - 4));
      t.setAttribute("y", String(tick.y + 3));
      t.setAttribute("class", "tick tick-y");
      t.textContent = tick.label;
      svg.append(t);
    }

    const obs = document.createElementNS(SVG_NS, "polyline");
    obs.setAttribute("points", geo.observed);
    obs.setAttribute("class", "line-observed");
    const fit = document.createElementNS(SVG_NS, "polyline");
    fit.setAttribute("points", geo.fitted);
    fit.setAttribute("class", "line-fitted");
    svg.append(obs, fit);

    const head = document.createElement("h3");
    head.textContent = `pixel (${data.x}, ${data.y})`;
    const badge = document.createElement("span");
    badge.className = `status-badge status-${data.params.status}`;
    badge.textContent = data.params.status;
    head.append(" ", badge);

    const params = document.createElement("dl");
    params.className = "param-list";
    const rows: [string, string][] = [
      ["diffuse", formatMapValue(data.params.i_d)],
      ["specular", formatMapValue(data.params.i_s)],
      ["melanin", formatMapValue(data.params.f_mel)],
      ["haemoglobin", formatMapValue(data.params.f_blood)],
      ["rel. error", formatMapValue(data.params.relative_spectral_error)],
      ["skin prob.", formatMapValue(data.params.skin_probability)],
    ];
    for (const [k, v] of rows) {
      const dt = document.createElement("dt");
      dt.textContent = k;
      const dd = document.createElement("dd");
      dd.textContent = v;
      params.append(dt, dd);
    }

    const legend = document.createElement("p");
    legend.className = "legend";
    legend.innerHTML =
      '<span class="swatch swatch-observed"></span> observed ' +
      '<span class="swatch swatch-fitted"></span> reconstructed';

    panel.append(head, svg, legend, params);
  }

  // ---- session wiring -----------------------------------------------

  async function connect(): Promise<void> {
    const client = new SkinspecClient(baseInput.value.trim());
    const path = pathInput.value.trim();
    if (!path) {
      notify("enter the decomposition directory path on the server");
      return;
    }
    connectBtn.disabled = true;
    try {
      const meta = await client.registerSession(path);
      const state = defaultEditState();
      const mask = new MaskGrid(meta.width, meta.height);
      const preview = new PreviewManager({
        send: (script) => client.edit(meta.id, script),
        onImage: (bytes) => showPreview(bytes),
        onError: (err) => notify(describe(err)),
      });
      session = { client, meta, state, mask, preview, bins: new Map() };

      maskCanvas.width = meta.width;
      maskCanvas.height = meta.height;
      maskCanvas.style.aspectRatio = `${meta.width} / ${meta.height}`;

      const gallery = buildGallery(galleryEl, meta);
      gallery.setImage("input", client.renderUrl(meta.id, "input"), "input");
      gallery.setImage("reconstruction",
        client.renderUrl(meta.id, "reconstruction"), "reconstruction");
      for (const name of ["i_d", "i_s", "f_mel", "f_blood", "probability"]) {
        gallery.setImage(name, client.mapPngUrl(meta.id, name), name);
      }
      gallery.onPick((x, y) => {
        void inspect(x, y);
      });

      buildControls(schedulePreview);
      syncMaskState();
      // seed the preview with the identity render
      session.preview.requestNow(stateToScript(state));
      notify(`session ${meta.id}: ${meta.width}x${meta.height}, `
        + `${meta.grid.count} bands`, "info");
    } catch (err) {
      notify(describe(err));
    } finally {
      connectBtn.disabled = false;
    }
  }

  async function inspect(x: number, y: number): Promise<void> {
    if (!session) return;
    try {
      const data = await session.client.spectrum(session.meta.id, x, y);
      renderSpectrum(spectrumPanel, data);
      // annotate with raw map values decoded from the .bin payloads
      const raw = await rawValue("f_mel", x, y);
      if (raw !== null) {
        const note = document.createElement("p");
        note.className = "raw-note";
        note.textContent = `raw f_mel at (${x}, ${y}): ${formatMapValue(raw)}`;
        spectrumPanel.append(note);
      }
    } catch (err) {
      notify(describe(err));
    }
  }

  async function rawValue(name: string, x: number, y: number): Promise<number | null> {
    if (!session) return null;
    try {
      let data = session.bins.get(name);
      if (!data) {
        const buf = await session.client.mapBin(session.meta.id, name);
        data = parseFloatMap(buf, session.meta.width, session.meta.height);
        session.bins.set(name, data);
      }
      return mapValueAt(data, session.meta.width, x, y);
    } catch {
      return null;
    }
  }

  connectBtn.addEventListener("click", () => {
    void connect();
  });
  pathInput.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") void connect();
  });
}
