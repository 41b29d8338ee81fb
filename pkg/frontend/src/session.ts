// Edit session state: source image, mask layer, prompt history, and the
// result gallery. Selecting a gallery entry feeds its pixels back in as the
// next source image, which is the studio's iteration loop.

import { MaskLayer } from "./mask.js";
import { RestoreMetadata, RestoreRequest, Task } from "./api.js";

export interface GalleryEntry {
  readonly request: Readonly<RestoreRequest>;
  readonly imagePng: Uint8Array;
  readonly metadata: RestoreMetadata;
}

export class EditSession {
  task: Task = "inpaint";
  prompt = "";
  beta = 1.0;
  srFactor = 4;
  seed?: number;
  readonly promptHistory: string[] = [];
  readonly gallery: GalleryEntry[] = [];

  private sourcePng: Uint8Array;
  mask: MaskLayer;

  constructor(sourcePng: Uint8Array, width: number, height: number) {
    this.sourcePng = sourcePng;
    this.mask = new MaskLayer(width, height);
  }

  get sourceImage(): Uint8Array {
    return this.sourcePng;
  }

  setSource(png: Uint8Array, width: number, height: number): void {
    this.sourcePng = png;
    this.mask = new MaskLayer(width, height);
  }

  recordPrompt(prompt: string): void {
    this.prompt = prompt;
    if (prompt && this.promptHistory[this.promptHistory.length - 1] !== prompt) {
      this.promptHistory.push(prompt);
    }
  }

  buildRequest(maskPng?: Uint8Array): RestoreRequest {
    const req: RestoreRequest = {
      task: this.task,
      imagePng: this.sourcePng,
      beta: this.beta,
    };
    if (this.task === "inpaint") req.maskPng = maskPng;
    if (this.task === "sr") req.srFactor = this.srFactor;
    if (this.prompt) req.prompt = this.prompt;
    if (this.seed !== undefined) req.seed = this.seed;
    return req;
  }

  addResult(request: RestoreRequest, imagePng: Uint8Array, metadata: RestoreMetadata): GalleryEntry {
    const entry: GalleryEntry = Object.freeze({
      request: Object.freeze({ ...request }),
      imagePng,
      metadata,
    });
    this.gallery.push(entry);
    return entry;
  }

  /**
   * Feedback loop: make a previous result the new source image. The next
   * request built from the session carries exactly the selected bytes.
   */
  adoptResult(index: number, width: number, height: number): GalleryEntry {
    const entry = this.gallery[index];
    if (!entry) throw new Error(`no gallery entry at index ${index}`);
    this.setSource(entry.imagePng, width, height);
    return entry;
  }
}
