/**
 * Browser studio: paint label edits over the predicted mask, launch
 * optimization with live loss streaming, drag per-vector scale sliders for
 * instant previews, and refine or compare results.
 *
 * All service access goes through ApiClient; slider drags are debounced and
 * only reach /apply with refine_steps=0.
 */

import { ApiClient, browserFetch, VectorEntry } from "./api.js";
import { wipeLayout } from "./compare.js";
import { EditStackController, SLIDER_MAX, SLIDER_MIN } from "./editStack.js";
import { LossSeries } from "./lossChart.js";
import { MaskBuffer, BrushMode } from "./maskBuffer.js";
import { LabelSchema, flatPalette, indicesToRgba, rgbaToIndices } from "./palette.js";
import { encodeIndexedPng } from "./png.js";
import { consumeEventStream } from "./sse.js";

const DISPLAY_SCALE = 12;

interface StudioState {
  api: ApiClient;
  schema: LabelSchema;
  resolution: number;
  sessionId: string | null;
  mask: MaskBuffer | null;
  brushLabel: number;
  brushRadius: number;
  brushMode: BrushMode;
  overlayAlpha: number;
  originalImage: HTMLImageElement | null;
  currentImage: HTMLImageElement | null;
  editStack: EditStackController | null;
  loss: LossSeries;
  activeJob: string | null;
  compareFraction: number;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function pngDataUrl(base64: string): string {
  return `data:image/png;base64,${base64}`;
}

async function loadImage(src: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = reject;
    img.src = src;
  });
}

async function maskIndicesFromPng(base64: string, schema: LabelSchema,
                                  resolution: number): Promise<Uint8Array> {
  const img = await loadImage(pngDataUrl(base64));
  const canvas = document.createElement("canvas");
  canvas.width = resolution;
  canvas.height = resolution;
  const ctx = canvas.getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(img, 0, 0);
  const rgba = ctx.getImageData(0, 0, resolution, resolution).data;
  return rgbaToIndices(new Uint8Array(rgba.buffer.slice(0)), schema);
}

function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

export async function startStudio(baseUrl = ""): Promise<void> {
  const api = new ApiClient(browserFetch(baseUrl), baseUrl);
  const schemaBody = await api.health().then(() =>
    fetch(`${baseUrl}/schema`).then((r) => r.json()));
  const state: StudioState = {
    api,
    schema: { names: schemaBody.names, palette: schemaBody.palette },
    resolution: schemaBody.resolution,
    sessionId: null,
    mask: null,
    brushLabel: 1,
    brushRadius: 1,
    brushMode: "paint",
    overlayAlpha: 0.55,
    originalImage: null,
    currentImage: null,
    editStack: null,
    loss: new LossSeries(),
    activeJob: null,
    compareFraction: 0.5,
  };

  buildPalette(state);
  wireTools(state);
  wireSessionControls(state);
  await refreshSessionList(state);
  await refreshVectors(state);
  requestAnimationFrame(() => drawLoop(state));
}

// -- rendering ----------------------------------------------------------------

function drawLoop(state: StudioState): void {
  drawCanvas(state);
  drawCompare(state);
  drawLossChart(state);
  requestAnimationFrame(() => drawLoop(state));
}

function drawCanvas(state: StudioState): void {
  const canvas = el<HTMLCanvasElement>("paint-canvas");
  const size = state.resolution * DISPLAY_SCALE;
  if (canvas.width !== size) {
    canvas.width = size;
    canvas.height = size;
  }
  const ctx = canvas.getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, size, size);
  if (state.currentImage) {
    ctx.drawImage(state.currentImage, 0, 0, size, size);
  }
  if (state.mask && state.overlayAlpha > 0) {
    const rgba = indicesToRgba(state.mask.snapshot(), state.schema,
                               Math.round(state.overlayAlpha * 255));
    const tile = new ImageData(new Uint8ClampedArray(rgba), state.resolution,
                               state.resolution);
    const off = document.createElement("canvas");
    off.width = state.resolution;
    off.height = state.resolution;
    off.getContext("2d")!.putImageData(tile, 0, 0);
    ctx.drawImage(off, 0, 0, size, size);
  }
}

function drawCompare(state: StudioState): void {
  const canvas = el<HTMLCanvasElement>("compare-canvas");
  const size = state.resolution * 6;
  if (canvas.width !== size) {
    canvas.width = size;
    canvas.height = size;
  }
  const ctx = canvas.getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, size, size);
  if (!state.originalImage || !state.currentImage) return;
  const layout = wipeLayout(size, state.compareFraction);
  const frac = layout.beforeWidth / size;
  ctx.drawImage(state.originalImage,
                0, 0, state.originalImage.width * frac, state.originalImage.height,
                0, 0, layout.beforeWidth, size);
  ctx.drawImage(state.currentImage,
                state.currentImage.width * frac, 0,
                state.currentImage.width * (1 - frac), state.currentImage.height,
                layout.afterX, 0, layout.afterWidth, size);
  ctx.strokeStyle = "#ffffff";
  ctx.beginPath();
  ctx.moveTo(layout.afterX, 0);
  ctx.lineTo(layout.afterX, size);
  ctx.stroke();
}

function drawLossChart(state: StudioState): void {
  const canvas = el<HTMLCanvasElement>("loss-canvas");
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#39404d";
  ctx.strokeRect(0.5, 0.5, canvas.width - 1, canvas.height - 1);
  const series = [["total", "#f2c14e"], ["ce", "#e2654f"], ["rgb", "#58a6ff"]] as const;
  for (const [field, color] of series) {
    const line = state.loss.polyline(field, canvas.width, canvas.height);
    if (!line.length) continue;
    ctx.strokeStyle = color;
    ctx.beginPath();
    line.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
    ctx.stroke();
  }
  const latest = state.loss.latest();
  el<HTMLSpanElement>("loss-latest").textContent =
    latest ? `step ${latest.step}: total ${latest.total.toFixed(4)}` : "";
}

// -- palette & tools ------------------------------------------------------------

function buildPalette(state: StudioState): void {
  const host = el<HTMLDivElement>("palette");
  host.innerHTML = "";
  state.schema.names.forEach((name, i) => {
    const [r, g, b] = state.schema.palette[i];
    const button = document.createElement("button");
    button.className = "label-chip";
    button.style.setProperty("--chip", `rgb(${r},${g},${b})`);
    button.textContent = `${i} ${name}`;
    button.onclick = () => {
      state.brushLabel = i;
      host.querySelectorAll(".label-chip").forEach((n) => n.classList.remove("active"));
      button.classList.add("active");
    };
    if (i === state.brushLabel) button.classList.add("active");
    host.appendChild(button);
  });
}

function canvasToMaskCoords(state: StudioState, event: PointerEvent,
                            canvas: HTMLCanvasElement): [number, number] {
  const rect = canvas.getBoundingClientRect();
  const x = ((event.clientX - rect.left) / rect.width) * state.resolution;
  const y = ((event.clientY - rect.top) / rect.height) * state.resolution;
  return [Math.floor(x), Math.floor(y)];
}

function wireTools(state: StudioState): void {
  const canvas = el<HTMLCanvasElement>("paint-canvas");
  let painting = false;

  const applyAt = (event: PointerEvent) => {
    if (!state.mask) return;
    const [x, y] = canvasToMaskCoords(state, event, canvas);
    if (x < 0 || y < 0 || x >= state.resolution || y >= state.resolution) return;
    if (state.brushMode === "fill") {
      state.mask.fill(x, y, state.brushLabel);
    } else if (state.brushMode === "erase") {
      state.mask.erase(x, y, state.brushRadius);
    } else {
      state.mask.paint(x, y, state.brushRadius, state.brushLabel);
    }
  };

  canvas.onpointerdown = (e) => {
    painting = true;
    applyAt(e);
  };
  canvas.onpointermove = (e) => {
    if (painting && state.brushMode !== "fill") applyAt(e);
  };
  const stop = () => (painting = false);
  canvas.onpointerup = stop;
  canvas.onpointerleave = stop;

  el<HTMLInputElement>("brush-radius").oninput = (e) => {
    state.brushRadius = Number((e.target as HTMLInputElement).value);
  };
  el<HTMLInputElement>("overlay-alpha").oninput = (e) => {
    state.overlayAlpha = Number((e.target as HTMLInputElement).value);
  };
  for (const mode of ["paint", "erase", "fill"] as BrushMode[]) {
    el<HTMLButtonElement>(`mode-${mode}`).onclick = () => {
      state.brushMode = mode;
      document.querySelectorAll(".mode-button").forEach((n) => n.classList.remove("active"));
      el(`mode-${mode}`).classList.add("active");
    };
  }
  el<HTMLButtonElement>("undo").onclick = () => state.mask?.undo();
  el<HTMLButtonElement>("redo").onclick = () => state.mask?.redo();
  el<HTMLInputElement>("compare-slider").oninput = (e) => {
    state.compareFraction = Number((e.target as HTMLInputElement).value);
  };
}

// -- sessions -------------------------------------------------------------------

async function refreshSessionList(state: StudioState): Promise<void> {
  const host = el<HTMLUListElement>("session-list");
  host.innerHTML = "";
  for (const id of await state.api.listSessions()) {
    const item = document.createElement("li");
    const link = document.createElement("a");
    link.href = "#";
    link.textContent = id;
    link.onclick = (e) => {
      e.preventDefault();
      void resumeSession(state, id);
    };
    item.appendChild(link);
    host.appendChild(item);
  }
}

async function adoptSession(state: StudioState, sessionId: string,
                            reconstructionB64: string, maskB64: string): Promise<void> {
  state.sessionId = sessionId;
  state.originalImage = await loadImage(pngDataUrl(reconstructionB64));
  state.currentImage = state.originalImage;
  const indices = await maskIndicesFromPng(maskB64, state.schema, state.resolution);
  state.mask = new MaskBuffer(state.resolution, state.resolution, indices);
  state.editStack = new EditStackController(
    state.api, sessionId, (result) => void updatePreview(state, result), 100,
    (err) => setStatus(state, `apply failed: ${err}`));
  el<HTMLSpanElement>("active-session").textContent = sessionId;
  setStatus(state, "session ready");
}

async function resumeSession(state: StudioState, sessionId: string): Promise<void> {
  const imageResp = await fetch(`${state.api.baseUrl}/sessions/${sessionId}/image`);
  const imageBytes = new Uint8Array(await imageResp.arrayBuffer());
  const maskBytes = await state.api.getMask(sessionId);
  await adoptSession(state, sessionId, bytesToBase64(imageBytes), bytesToBase64(maskBytes));
}

function wireSessionControls(state: StudioState): void {
  el<HTMLInputElement>("upload").onchange = async (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    setStatus(state, "embedding...");
    const bytes = new Uint8Array(await file.arrayBuffer());
    try {
      const created = await state.api.createSession(bytesToBase64(bytes));
      await adoptSession(state, created.session_id, created.reconstruction_png,
                         created.predicted_mask_png);
      await refreshSessionList(state);
    } catch (err) {
      setStatus(state, `embedding failed: ${err}`);
    }
  };

  el<HTMLButtonElement>("submit-edit").onclick = () => void submitEdit(state);
  el<HTMLButtonElement>("cancel-edit").onclick = () => {
    if (state.sessionId && state.activeJob) {
      void state.api.cancelJob(state.sessionId, state.activeJob);
    }
  };
}

function setStatus(state: StudioState, text: string): void {
  el<HTMLSpanElement>("status").textContent = text;
}

// -- edit submission --------------------------------------------------------------

function touchedLabels(predicted: Uint8Array, edited: Uint8Array): number[] {
  const labels = new Set<number>();
  for (let i = 0; i < edited.length; i++) {
    if (edited[i] !== predicted[i]) {
      labels.add(edited[i]);
      labels.add(predicted[i]);
    }
  }
  return [...labels].sort((a, b) => a - b);
}

async function submitEdit(state: StudioState): Promise<void> {
  if (!state.sessionId || !state.mask) return;
  const edited = state.mask.snapshot();
  const maskBytes = await state.api.getMask(state.sessionId);
  // server's stored prediction gives the reference mask for the q default
  const png = encodeIndexedPng(edited, state.resolution, state.resolution,
                               flatPalette(state.schema));
  await state.api.putMask(state.sessionId, png);

  const qField = el<HTMLInputElement>("q-labels").value.trim();
  let qLabels: number[];
  if (qField) {
    qLabels = qField.split(",").map((s) => Number(s.trim()));
  } else {
    const predicted = await maskIndicesFromPng(bytesToBase64(maskBytes),
                                               state.schema, state.resolution);
    qLabels = touchedLabels(predicted, edited);
  }
  if (!qLabels.length) {
    setStatus(state, "nothing changed: paint an edit first or set q labels");
    return;
  }

  const steps = Number(el<HTMLInputElement>("edit-steps").value) || 100;
  const mode = el<HTMLSelectElement>("edit-mode").value;
  const saveName = el<HTMLInputElement>("save-name").value.trim() || undefined;
  state.loss.clear();
  setStatus(state, "optimizing...");
  try {
    const job = await state.api.submitEdit(state.sessionId, {
      q_labels: qLabels,
      steps,
      mode,
      save_vector_name: saveName,
    });
    state.activeJob = job.job_id;
    await streamJob(state, job.job_id);
  } catch (err) {
    setStatus(state, `edit failed: ${err}`);
  }
}

async function streamJob(state: StudioState, jobId: string): Promise<void> {
  const resp = await fetch(state.api.jobEventsPath(state.sessionId!, jobId));
  if (!resp.body) return;
  await consumeEventStream(resp.body, (event) => {
    if (event.step !== undefined) state.loss.push(event);
    if (event.status) {
      setStatus(state, `job ${event.status}`);
      state.activeJob = null;
      if (event.status === "done") void reloadSessionArtifacts(state);
    }
  });
}

async function reloadSessionArtifacts(state: StudioState): Promise<void> {
  if (!state.sessionId) return;
  const imageResp = await fetch(`${state.api.baseUrl}/sessions/${state.sessionId}/image`);
  state.currentImage = await loadImage(
    pngDataUrl(bytesToBase64(new Uint8Array(await imageResp.arrayBuffer()))));
  const maskBytes = await state.api.getMask(state.sessionId);
  const indices = await maskIndicesFromPng(bytesToBase64(maskBytes),
                                           state.schema, state.resolution);
  state.mask = new MaskBuffer(state.resolution, state.resolution, indices);
  await refreshVectors(state);
}

async function updatePreview(state: StudioState, result: { image_png: string;
                                                           mask_png: string }): Promise<void> {
  state.currentImage = await loadImage(pngDataUrl(result.image_png));
  const indices = await maskIndicesFromPng(result.mask_png, state.schema,
                                           state.resolution);
  state.mask?.setBaseline(indices);
}

// -- vector library ---------------------------------------------------------------

async function refreshVectors(state: StudioState): Promise<void> {
  const host = el<HTMLDivElement>("vector-list");
  host.innerHTML = "";
  let entries: VectorEntry[] = [];
  try {
    entries = await state.api.listVectors();
  } catch {
    return;
  }
  for (const entry of entries) {
    const row = document.createElement("div");
    row.className = "vector-row";
    const name = document.createElement("span");
    name.textContent = entry.compatible === false ? `${entry.name} (incompatible)`
                                                  : entry.name;
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = String(SLIDER_MIN);
    slider.max = String(SLIDER_MAX);
    slider.step = "0.05";
    slider.value = "0";
    slider.disabled = entry.compatible === false;
    const value = document.createElement("span");
    value.textContent = "0.00";
    slider.oninput = () => {
      value.textContent = Number(slider.value).toFixed(2);
      state.editStack?.setScale(entry.name, Number(slider.value));
    };
    const refine = document.createElement("button");
    refine.textContent = "refine 30";
    refine.disabled = entry.compatible === false;
    refine.onclick = async () => {
      if (!state.sessionId || !state.editStack) return;
      setStatus(state, "refining...");
      try {
        const applied = state.editStack.appliedScale(entry.name);
        if (applied !== 0) {
          await state.api.applyVector(state.sessionId, entry.name, -applied, 0);
        }
        const result = await state.api.applyVector(state.sessionId, entry.name,
                                                   Number(slider.value), 30);
        await updatePreview(state, result);
        setStatus(state, "refined");
      } catch (err) {
        setStatus(state, `refine failed: ${err}`);
      }
    };
    row.append(name, slider, value, refine);
    host.appendChild(row);
  }
}
