// Mask raster edited at native image resolution. 255 = keep, 0 = hole.
// Brush strokes are hard-edged circles (no antialiasing) so the exported
// bytes depend only on the geometry, never on a canvas implementation.

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  data: Uint8Array;
  private undoStack: Uint8Array[] = [];

  constructor(width: number, height: number) {
    if (width <= 0 || height <= 0) {
      throw new Error(`mask dimensions must be positive, got ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height).fill(255);
  }

  /** Snapshot current pixels so the next undo() restores them. */
  beginStroke(): void {
    this.undoStack.push(this.data.slice());
  }

  private paintCircle(cx: number, cy: number, radius: number, value: 0 | 255): void {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = value;
        }
      }
    }
  }

  brush(x: number, y: number, radius: number): void {
    this.paintCircle(x, y, radius, 0);
  }

  erase(x: number, y: number, radius: number): void {
    this.paintCircle(x, y, radius, 255);
  }

  /** Stamp brush circles along a segment so fast pointer moves leave no gaps. */
  strokeSegment(x0: number, y0: number, x1: number, y1: number, radius: number, eraser = false): void {
    const steps = Math.max(1, Math.ceil(Math.hypot(x1 - x0, y1 - y0)));
    for (let i = 0; i <= steps; i++) {
      const t = i / steps;
      const x = x0 + (x1 - x0) * t;
      const y = y0 + (y1 - y0) * t;
      if (eraser) this.erase(x, y, radius);
      else this.brush(x, y, radius);
    }
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.data = prev;
    return true;
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  clear(): void {
    this.beginStroke();
    this.data.fill(255);
  }

  isEmpty(): boolean {
    return this.data.every((v) => v === 255);
  }

  holeFraction(): number {
    let holes = 0;
    for (const v of this.data) if (v === 0) holes++;
    return holes / this.data.length;
  }
}
