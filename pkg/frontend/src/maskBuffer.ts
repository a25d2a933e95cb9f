/**
 * The editable label grid behind the mask overlay.
 *
 * Every mutating call records a sparse diff (pixel index, before, after), so
 * undo and redo restore prior states byte-exactly. "Erase" restores pixels
 * from the baseline (the model-predicted mask) rather than painting a label.
 */

export interface MaskDiff {
  positions: Uint32Array;
  before: Uint8Array;
  after: Uint8Array;
}

export type BrushMode = "paint" | "erase" | "fill";

export class MaskBuffer {
  readonly width: number;
  readonly height: number;
  private data: Uint8Array;
  private baseline: Uint8Array;
  private undoStack: MaskDiff[] = [];
  private redoStack: MaskDiff[] = [];

  constructor(width: number, height: number, initial: Uint8Array) {
    if (initial.length !== width * height) {
      throw new Error("initial mask size mismatch");
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(initial);
    this.baseline = new Uint8Array(initial);
  }

  /** Current labels; a defensive copy so callers cannot bypass diff capture. */
  snapshot(): Uint8Array {
    return new Uint8Array(this.data);
  }

  get(x: number, y: number): number {
    return this.data[y * this.width + x];
  }

  /** Replace the baseline used by erase (e.g. after a new model prediction). */
  setBaseline(mask: Uint8Array): void {
    if (mask.length !== this.data.length) throw new Error("baseline size mismatch");
    this.baseline = new Uint8Array(mask);
  }

  private commit(touched: Map<number, number>): void {
    if (touched.size === 0) return;
    const positions = new Uint32Array(touched.size);
    const before = new Uint8Array(touched.size);
    const after = new Uint8Array(touched.size);
    let i = 0;
    for (const [pos, prev] of touched) {
      positions[i] = pos;
      before[i] = prev;
      after[i] = this.data[pos];
      i++;
    }
    this.undoStack.push({ positions, before, after });
    this.redoStack.length = 0;
  }

  private applyBrush(cx: number, cy: number, radius: number,
                     value: (pos: number) => number): Map<number, number> {
    const touched = new Map<number, number>();
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.ceil(cx - radius));
    const x1 = Math.min(this.width - 1, Math.floor(cx + radius));
    const y0 = Math.max(0, Math.ceil(cy - radius));
    const y1 = Math.min(this.height - 1, Math.floor(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2) {
          const pos = y * this.width + x;
          const next = value(pos);
          if (this.data[pos] !== next) {
            if (!touched.has(pos)) touched.set(pos, this.data[pos]);
            this.data[pos] = next;
          }
        }
      }
    }
    return touched;
  }

  /** Circular brush stamp; radius 0 touches exactly one pixel. */
  paint(cx: number, cy: number, radius: number, label: number): void {
    this.commit(this.applyBrush(cx, cy, radius, () => label));
  }

  /** Restore the baseline mask under the brush. */
  erase(cx: number, cy: number, radius: number): void {
    this.commit(this.applyBrush(cx, cy, radius, (pos) => this.baseline[pos]));
  }

  /** 4-connected flood fill of the clicked label region. */
  fill(x: number, y: number, label: number): void {
    const start = y * this.width + x;
    const from = this.data[start];
    if (from === label) return;
    const touched = new Map<number, number>();
    const stack = [start];
    while (stack.length) {
      const pos = stack.pop()!;
      if (this.data[pos] !== from) continue;
      touched.set(pos, this.data[pos]);
      this.data[pos] = label;
      const px = pos % this.width;
      if (px > 0) stack.push(pos - 1);
      if (px < this.width - 1) stack.push(pos + 1);
      if (pos >= this.width) stack.push(pos - this.width);
      if (pos < this.data.length - this.width) stack.push(pos + this.width);
    }
    this.commit(touched);
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): boolean {
    const diff = this.undoStack.pop();
    if (!diff) return false;
    for (let i = 0; i < diff.positions.length; i++) {
      this.data[diff.positions[i]] = diff.before[i];
    }
    this.redoStack.push(diff);
    return true;
  }

  redo(): boolean {
    const diff = this.redoStack.pop();
    if (!diff) return false;
    for (let i = 0; i < diff.positions.length; i++) {
      this.data[diff.positions[i]] = diff.after[i];
    }
    this.undoStack.push(diff);
    return true;
  }
}
