/**
 * Stacked vector edits with live scale sliders.
 *
 * The session latent on the server accumulates applied coefficients per
 * vector (sum semantics, order-independent), so moving a slider only needs
 * to send the delta between the new value and what was already applied.
 * Slider motion is debounced and always goes through /apply with
 * refine_steps=0: the interactive path performs no optimization.
 */

import { ApiClient, ApplyResult } from "./api.js";
import { debounce, Debounced } from "./debounce.js";

export const SLIDER_MIN = -2;
export const SLIDER_MAX = 2;

export class EditStackController {
  /** coefficient currently applied on the server, per vector name */
  private applied = new Map<string, number>();
  /** value the user wants, per vector name */
  private desired = new Map<string, number>();
  private debounced: Debounced<[]>;
  private inFlight = false;
  private generation = 0;

  constructor(private api: ApiClient, private sessionId: string,
              private onPreview: (result: ApplyResult) => void,
              debounceMs = 100,
              private onError: (err: unknown) => void = () => undefined) {
    this.debounced = debounce(() => void this.sync(), debounceMs);
  }

  /** Slider callback: record the desired scale and schedule a sync. */
  setScale(vector: string, scale: number): void {
    this.desired.set(vector, scale);
    this.debounced();
  }

  appliedScale(vector: string): number {
    return this.applied.get(vector) ?? 0;
  }

  /** Reset a single vector's contribution. */
  clear(vector: string): void {
    this.setScale(vector, 0);
  }

  private async sync(): Promise<void> {
    if (this.inFlight) {
      // last-write-wins: re-schedule once the active call returns
      this.debounced();
      return;
    }
    const work: [string, number][] = [];
    for (const [vector, want] of this.desired) {
      const delta = want - (this.applied.get(vector) ?? 0);
      if (delta !== 0) work.push([vector, delta]);
    }
    if (!work.length) return;
    this.inFlight = true;
    const generation = ++this.generation;
    try {
      let last: ApplyResult | null = null;
      for (const [vector, delta] of work) {
        last = await this.api.applyVector(this.sessionId, vector, delta, 0);
        this.applied.set(vector, (this.applied.get(vector) ?? 0) + delta);
      }
      if (last && generation === this.generation) {
        this.onPreview(last);
      }
    } catch (err) {
      this.onError(err);
    } finally {
      this.inFlight = false;
    }
  }

  /** Force any pending slider value out immediately (e.g. on pointer-up). */
  flush(): void {
    this.debounced.flush();
  }
}
