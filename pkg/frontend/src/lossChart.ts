/** Bounded loss-series buffer with a polyline projection for canvas drawing. */

import { JobProgress } from "./sse.js";

export interface ChartPoint {
  step: number;
  total: number;
  rgb: number;
  ce: number;
}

export class LossSeries {
  private points: ChartPoint[] = [];

  constructor(private capacity = 512) {}

  push(event: JobProgress): void {
    if (event.step === undefined || event.loss_total === undefined) return;
    this.points.push({ step: event.step, total: event.loss_total,
                       rgb: event.loss_rgb ?? 0, ce: event.loss_ce ?? 0 });
    if (this.points.length > this.capacity) {
      this.points.splice(0, this.points.length - this.capacity);
    }
  }

  get length(): number {
    return this.points.length;
  }

  clear(): void {
    this.points.length = 0;
  }

  latest(): ChartPoint | null {
    return this.points.length ? this.points[this.points.length - 1] : null;
  }

  /**
   * Project a field to canvas coordinates: x spans the step range, y spans
   * [0, max value] top-down. Returns [] for fewer than two points.
   */
  polyline(field: "total" | "rgb" | "ce", width: number,
           height: number): [number, number][] {
    if (this.points.length < 2) return [];
    const steps = this.points.map((p) => p.step);
    const values = this.points.map((p) => p[field]);
    const x0 = steps[0];
    const x1 = steps[steps.length - 1];
    const top = Math.max(...values) || 1;
    return this.points.map((p, i) => [
      ((steps[i] - x0) / Math.max(1, x1 - x0)) * width,
      height - (values[i] / top) * height,
    ]);
  }
}
