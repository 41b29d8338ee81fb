// Studio entry point: wires the mask editor canvas, the restore controls,
// the before/after comparison slider, the beta-sweep filmstrip, and the
// result gallery to an EditSession and a RestoreClient.

import { ApiError, RestoreClient, RestoreRequest, Task } from "./api.js";
import { MaskLayer } from "./mask.js";
import { encodeMaskPng } from "./png.js";
import { EditSession } from "./session.js";

const SERVICE_URL = (window as any).TEXTRESTORE_URL ?? "http://localhost:8000";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function pngUrl(bytes: Uint8Array): string {
  return URL.createObjectURL(new Blob([bytes as BlobPart], { type: "image/png" }));
}

class MaskEditor {
  private drawing = false;
  private eraser = false;
  private last: [number, number] | null = null;
  radius = 12;

  constructor(
    private canvas: HTMLCanvasElement,
    private imageCanvas: HTMLCanvasElement,
    private getMask: () => MaskLayer,
  ) {
    canvas.addEventListener("pointerdown", (ev) => {
      this.drawing = true;
      this.getMask().beginStroke();
      this.last = this.toMaskCoords(ev);
      this.applyAt(this.last);
    });
    canvas.addEventListener("pointermove", (ev) => {
      if (!this.drawing) return;
      const pt = this.toMaskCoords(ev);
      const mask = this.getMask();
      if (this.last) {
        mask.strokeSegment(this.last[0], this.last[1], pt[0], pt[1], this.radius, this.eraser);
      }
      this.last = pt;
      this.render();
    });
    const stop = () => {
      this.drawing = false;
      this.last = null;
    };
    canvas.addEventListener("pointerup", stop);
    canvas.addEventListener("pointerleave", stop);
  }

  setEraser(on: boolean): void {
    this.eraser = on;
  }

  private toMaskCoords(ev: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const mask = this.getMask();
    return [
      ((ev.clientX - rect.left) / rect.width) * mask.width,
      ((ev.clientY - rect.top) / rect.height) * mask.height,
    ];
  }

  private applyAt(pt: [number, number]): void {
    const mask = this.getMask();
    if (this.eraser) mask.erase(pt[0], pt[1], this.radius);
    else mask.brush(pt[0], pt[1], this.radius);
    this.render();
  }

  render(): void {
    const mask = this.getMask();
    this.canvas.width = mask.width;
    this.canvas.height = mask.height;
    const ctx = this.canvas.getContext("2d")!;
    ctx.clearRect(0, 0, mask.width, mask.height);
    ctx.drawImage(this.imageCanvas, 0, 0);
    const overlay = ctx.getImageData(0, 0, mask.width, mask.height);
    for (let i = 0; i < mask.data.length; i++) {
      if (mask.data[i] === 0) {
        overlay.data[i * 4] = Math.min(255, overlay.data[i * 4] + 120);
        overlay.data[i * 4 + 3] = 255;
      }
    }
    ctx.putImageData(overlay, 0, 0);
  }
}

async function decodeToCanvas(png: Uint8Array): Promise<HTMLCanvasElement> {
  const bitmap = await createImageBitmap(new Blob([png as BlobPart], { type: "image/png" }));
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  canvas.getContext("2d")!.drawImage(bitmap, 0, 0);
  return canvas;
}

export async function startStudio(): Promise<void> {
  const client = new RestoreClient(SERVICE_URL);
  let session: EditSession | null = null;
  let imageCanvas: HTMLCanvasElement | null = null;
  let editor: MaskEditor | null = null;
  let inflight = false;
  const queue: (() => Promise<void>)[] = [];

  const status = el<HTMLDivElement>("status");
  const maskCanvas = el<HTMLCanvasElement>("mask-canvas");
  const beforeImg = el<HTMLImageElement>("before-img");
  const afterImg = el<HTMLImageElement>("after-img");
  const compare = el<HTMLInputElement>("compare-slider");
  const filmstrip = el<HTMLDivElement>("filmstrip");
  const galleryDiv = el<HTMLDivElement>("gallery");

  function report(text: string, isError = false): void {
    status.textContent = text;
    status.className = isError ? "error" : "";
  }

  async function loadSource(png: Uint8Array): Promise<void> {
    imageCanvas = await decodeToCanvas(png);
    if (!session) {
      session = new EditSession(png, imageCanvas.width, imageCanvas.height);
    } else {
      session.setSource(png, imageCanvas.width, imageCanvas.height);
    }
    editor = new MaskEditor(maskCanvas, imageCanvas, () => session!.mask);
    editor.radius = Number(el<HTMLInputElement>("brush-radius").value);
    editor.render();
    beforeImg.src = pngUrl(png);
  }

  el<HTMLInputElement>("image-input").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    await loadSource(new Uint8Array(await file.arrayBuffer()));
    report(`loaded ${file.name}`);
  });

  el<HTMLInputElement>("brush-radius").addEventListener("input", (ev) => {
    if (editor) editor.radius = Number((ev.target as HTMLInputElement).value);
  });
  el<HTMLInputElement>("eraser-toggle").addEventListener("change", (ev) => {
    editor?.setEraser((ev.target as HTMLInputElement).checked);
  });
  el<HTMLButtonElement>("undo-btn").addEventListener("click", () => {
    if (session?.mask.undo()) editor?.render();
  });

  function currentRequest(): RestoreRequest {
    if (!session) throw new Error("load an image first");
    session.task = el<HTMLSelectElement>("task-select").value as Task;
    session.beta = Number(el<HTMLInputElement>("beta-slider").value);
    session.srFactor = Number(el<HTMLSelectElement>("sr-factor").value);
    session.recordPrompt(el<HTMLInputElement>("prompt-input").value.trim());
    let maskPng: Uint8Array | undefined;
    if (session.task === "inpaint") {
      if (session.mask.isEmpty()) {
        report("mask is empty: exporting an all-keep mask", false);
      }
      maskPng = encodeMaskPng(session.mask.data, session.mask.width, session.mask.height);
    }
    return session.buildRequest(maskPng);
  }

  function enqueue(job: () => Promise<void>): void {
    queue.push(job);
    void drain();
  }

  async function drain(): Promise<void> {
    if (inflight) return;
    const job = queue.shift();
    if (!job) return;
    inflight = true;
    try {
      await job();
    } catch (err) {
      if (err instanceof ApiError) report(`service error: ${err.reason}`, true);
      else report(`request failed (session preserved): ${err}`, true);
    } finally {
      inflight = false;
      void drain();
    }
  }

  function renderGallery(): void {
    galleryDiv.replaceChildren();
    session!.gallery.forEach((entry, idx) => {
      const img = document.createElement("img");
      img.src = pngUrl(entry.imagePng);
      img.title = `step ${entry.metadata.model_step}, beta ${entry.metadata.beta}, source ${entry.metadata.condition_source}`;
      img.addEventListener("click", () => {
        enqueue(async () => {
          const canvas = await decodeToCanvas(entry.imagePng);
          session!.adoptResult(idx, canvas.width, canvas.height);
          await loadSource(entry.imagePng);
          report(`adopted result ${idx + 1} as the new source`);
        });
      });
      galleryDiv.appendChild(img);
    });
  }

  el<HTMLButtonElement>("restore-btn").addEventListener("click", () => {
    enqueue(async () => {
      const req = currentRequest();
      report("restoring...");
      const result = await client.restore(req);
      session!.addResult(req, result.imagePng, result.metadata);
      afterImg.src = pngUrl(result.imagePng);
      renderGallery();
      report(
        `done in ${result.metadata.timing_ms} ms, condition source: ${result.metadata.condition_source}`,
      );
    });
  });

  el<HTMLButtonElement>("sweep-btn").addEventListener("click", () => {
    enqueue(async () => {
      const req = currentRequest();
      const betas = [0, 0.25, 0.5, 0.75, 1.0];
      report(`sweeping beta over ${betas.join(", ")}...`);
      const frames = await client.sweep(req, betas);
      filmstrip.replaceChildren();
      for (const frame of frames) {
        const fig = document.createElement("figure");
        const img = document.createElement("img");
        img.src = pngUrl(frame.imagePng);
        const cap = document.createElement("figcaption");
        cap.textContent = `beta ${frame.beta} (${frame.conditionSource})`;
        fig.append(img, cap);
        filmstrip.appendChild(fig);
      }
      report(`sweep done: ${frames.length} frames`);
    });
  });

  compare.addEventListener("input", () => {
    afterImg.style.clipPath = `inset(0 0 0 ${compare.value}%)`;
  });

  try {
    const health = await client.health();
    report(health.model_loaded ? "service ready" : "service up, no model loaded", !health.model_loaded);
  } catch {
    report(`cannot reach service at ${SERVICE_URL}`, true);
  }
}

if (typeof document !== "undefined" && document.getElementById("status")) {
  void startStudio();
}
