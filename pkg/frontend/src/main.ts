/**
 * Single-page threshold-tuning UI.
 *
 * The analyst picks or uploads an image, drags the 0-10 threshold slider,
 * and reads the populated/depopulated percentages plus the mask overlay.
 * Every displayed number is copied from a server response; the client only
 * formats. Coverage requests are debounced (150 ms) with latest-wins
 * semantics so at most one request is in flight.
 */

import { ApiClient, isPngBytes } from "./api.js";
import type { CoverageReport, ImageInfo } from "./api.js";
import { LatestWins } from "./debounce.js";
import { clearOverlay, drawOverlay } from "./overlay.js";
import { initialState, withError, withImageSelected, withReport, UiState } from "./state.js";

export const DEBOUNCE_MS = 150;

const TEMPLATE = `
<header><h1>Cane coverage thresholding</h1></header>
<div id="banner" class="banner" hidden></div>
<main class="layout">
  <aside>
    <h2>Images</h2>
    <ul id="gallery"></ul>
    <label class="upload">Upload PNG <input id="file-input" type="file" accept="image/png"></label>
  </aside>
  <section>
    <div class="viewer">
      <img id="base-image" alt="">
      <canvas id="overlay-canvas"></canvas>
    </div>
    <div class="controls">
      <label>Threshold
        <input id="slider" type="range" min="0" max="10" step="0.1" value="5">
        <span id="slider-value">&mdash;</span>
      </label>
      <label><input id="overlay-toggle" type="checkbox" checked> overlay</label>
      <span id="busy" hidden>&hellip;</span>
    </div>
    <div class="readout">
      <div>populated <strong id="pct-populated">&mdash;</strong>%</div>
      <div>depopulated <strong id="pct-depopulated">&mdash;</strong>%</div>
      <div id="low-contrast" hidden>low contrast: threshold unreliable</div>
    </div>
    <div class="actions">
      <button id="predict-btn">Predict</button>
      <span id="predict-badge"></span>
      <button id="enhance-btn">Enhance</button>
      <select id="enhance-scale">
        <option>2</option><option selected>4</option>
      </select>
    </div>
    <div id="enhance-pane" class="compare" hidden>
      <figure><img id="compare-original" alt=""><figcaption>original</figcaption></figure>
      <figure><img id="compare-enhanced" alt=""><figcaption>enhanced</figcaption></figure>
    </div>
  </section>
</main>
`;

export function renderApp(root: HTMLElement): void {
  root.innerHTML = TEMPLATE;
}

function readFileBytes(file: File): Promise<Uint8Array> {
  if (typeof file.arrayBuffer === "function") {
    return file.arrayBuffer().then((buffer) => new Uint8Array(buffer));
  }
  // jsdom's File has no arrayBuffer(); FileReader covers it
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(new Uint8Array(reader.result as ArrayBuffer));
    reader.onerror = () => reject(reader.error ?? new Error("file read failed"));
    reader.readAsArrayBuffer(file);
  });
}

export interface AppHandles {
  readonly state: UiState;
  refreshGallery(): Promise<void>;
  selectImage(id: string): void;
}

export function wireApp(
  root: HTMLElement,
  api: ApiClient,
  options: { debounceMs?: number } = {},
): AppHandles {
  const el = <T extends HTMLElement>(id: string): T => {
    const found = root.querySelector<T>(`#${id}`);
    if (!found) throw new Error(`missing element #${id}`);
    return found;
  };
  const gallery = el<HTMLUListElement>("gallery");
  const fileInput = el<HTMLInputElement>("file-input");
  const slider = el<HTMLInputElement>("slider");
  const sliderValue = el<HTMLSpanElement>("slider-value");
  const pctPopulated = el<HTMLElement>("pct-populated");
  const pctDepopulated = el<HTMLElement>("pct-depopulated");
  const lowContrast = el<HTMLElement>("low-contrast");
  const banner = el<HTMLDivElement>("banner");
  const busy = el<HTMLElement>("busy");
  const baseImage = el<HTMLImageElement>("base-image");
  const overlayCanvas = el<HTMLCanvasElement>("overlay-canvas");
  const overlayToggle = el<HTMLInputElement>("overlay-toggle");
  const predictBadge = el<HTMLElement>("predict-badge");
  const enhancePane = el<HTMLDivElement>("enhance-pane");

  let state = initialState();

  const showBanner = (message: string | null) => {
    banner.hidden = message === null;
    banner.textContent = message ?? "";
  };

  const showReport = (report: CoverageReport) => {
    // values rendered verbatim from the response; formatting only
    pctPopulated.textContent = report.populated_pct.toFixed(2);
    pctDepopulated.textContent = report.depopulated_pct.toFixed(2);
    sliderValue.textContent = report.threshold_user.toFixed(1);
    lowContrast.hidden = !report.low_contrast;
    if (state.overlayVisible) {
      void drawOverlay(overlayCanvas, report.mask_png).catch(() => undefined);
    }
  };

  const resetReadout = () => {
    pctPopulated.textContent = "—";
    pctDepopulated.textContent = "—";
    sliderValue.textContent = "—";
    lowContrast.hidden = true;
    predictBadge.textContent = "";
    clearOverlay(overlayCanvas);
  };

  const scheduler = new LatestWins<number, CoverageReport>(
    options.debounceMs ?? DEBOUNCE_MS,
    (threshold) => {
      if (state.selectedId === null) return Promise.reject(new Error("no image selected"));
      return api.coverage(state.selectedId, threshold);
    },
    (_threshold, report) => {
      state = withReport(state, report);
      showBanner(null);
      showReport(report);
    },
    {
      onError: (err) => {
        state = withError(state, String(err instanceof Error ? err.message : err));
        showBanner(state.banner);
      },
      onBusy: (value) => {
        state = { ...state, requestInFlight: value };
        busy.hidden = !value;
      },
    },
  );

  const selectImage = (id: string) => {
    state = withImageSelected(state, id);
    resetReadout();
    baseImage.src = `/files/${id}`;
    enhancePane.hidden = true;
    for (const item of gallery.querySelectorAll("li")) {
      item.classList.toggle("selected", item.dataset.id === id);
    }
    scheduler.submit(state.threshold);
  };

  const refreshGallery = async () => {
    const images = await api.listImages();
    gallery.innerHTML = "";
    for (const info of images) {
      gallery.appendChild(galleryEntry(info));
    }
  };

  const galleryEntry = (info: ImageInfo): HTMLLIElement => {
    const item = document.createElement("li");
    item.dataset.id = info.id;
    const button = document.createElement("button");
    button.textContent = `${info.name} (${info.w}×${info.h})`;
    button.addEventListener("click", () => selectImage(info.id));
    item.appendChild(button);
    return item;
  };

  slider.addEventListener("input", () => {
    state = { ...state, threshold: Number(slider.value) };
    if (state.selectedId !== null) scheduler.submit(state.threshold);
  });

  overlayToggle.addEventListener("change", () => {
    state = { ...state, overlayVisible: overlayToggle.checked };
    if (!state.overlayVisible) {
      clearOverlay(overlayCanvas);
    } else if (state.lastReport) {
      void drawOverlay(overlayCanvas, state.lastReport.mask_png).catch(() => undefined);
    }
  });

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    void (async () => {
      const bytes = await readFileBytes(file);
      if (!isPngBytes(bytes)) {
        showBanner("only PNG uploads are supported");
        return; // rejected before any request
      }
      try {
        const { id } = await api.upload(bytes.buffer as ArrayBuffer);
        await refreshGallery();
        selectImage(id);
      } catch (err) {
        showBanner(String(err instanceof Error ? err.message : err));
      }
    })();
  });

  el<HTMLButtonElement>("predict-btn").addEventListener("click", () => {
    if (state.selectedId === null) return;
    void api
      .predict(state.selectedId)
      .then((prediction) => {
        const pct = (100 * (prediction.probs[prediction.label] ?? 0)).toFixed(1);
        predictBadge.textContent = `${prediction.label} ${pct}%`;
      })
      .catch((err) => showBanner(String(err instanceof Error ? err.message : err)));
  });

  el<HTMLButtonElement>("enhance-btn").addEventListener("click", () => {
    if (state.selectedId === null) return;
    const scale = Number(el<HTMLSelectElement>("enhance-scale").value);
    const original = state.selectedId;
    void api
      .enhance(original, scale)
      .then(({ id_out }) => {
        el<HTMLImageElement>("compare-original").src = `/files/${original}`;
        el<HTMLImageElement>("compare-enhanced").src = `/files/${id_out}`;
        enhancePane.hidden = false;
        return refreshGallery();
      })
      .catch((err) => showBanner(String(err instanceof Error ? err.message : err)));
  });

  return {
    get state() {
      return state;
    },
    refreshGallery,
    selectImage,
  };
}
