/** Before/after wipe composition: pure rectangle math for the canvas draw. */

export interface WipeLayout {
  /** pixels of the BEFORE image to draw, from the left */
  beforeWidth: number;
  /** x offset where the AFTER image begins */
  afterX: number;
  afterWidth: number;
}

export function wipeLayout(width: number, fraction: number): WipeLayout {
  const f = Math.min(1, Math.max(0, fraction));
  const split = Math.round(width * f);
  return { beforeWidth: split, afterX: split, afterWidth: width - split };
}
