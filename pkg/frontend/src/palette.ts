/** Label schema handling: palette colors are the wire identity of labels. */

export interface LabelSchema {
  names: string[];
  /** palette[i] = [r, g, b] display color of label id i */
  palette: [number, number, number][];
}

export function flatPalette(schema: LabelSchema): Uint8Array {
  const out = new Uint8Array(schema.palette.length * 3);
  schema.palette.forEach(([r, g, b], i) => {
    out[i * 3] = r;
    out[i * 3 + 1] = g;
    out[i * 3 + 2] = b;
  });
  return out;
}

/**
 * Recover label indices from RGBA pixels rendered out of an indexed PNG.
 * Palette colors are exact in indexed PNGs, so exact matching is sound; any
 * unknown color is an error rather than a nearest-match guess.
 */
export function rgbaToIndices(rgba: Uint8Array | Uint8ClampedArray,
                              schema: LabelSchema): Uint8Array {
  const lookup = new Map<number, number>();
  schema.palette.forEach(([r, g, b], i) => lookup.set((r << 16) | (g << 8) | b, i));
  const n = rgba.length / 4;
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    const key = (rgba[i * 4] << 16) | (rgba[i * 4 + 1] << 8) | rgba[i * 4 + 2];
    const index = lookup.get(key);
    if (index === undefined) {
      throw new Error(`pixel ${i} has color #${key.toString(16)} not in the schema palette`);
    }
    out[i] = index;
  }
  return out;
}

/** Mask indices to RGBA for canvas display, with the given overlay alpha. */
export function indicesToRgba(indices: Uint8Array, schema: LabelSchema,
                              alpha = 255): Uint8ClampedArray {
  const out = new Uint8ClampedArray(indices.length * 4);
  for (let i = 0; i < indices.length; i++) {
    const [r, g, b] = schema.palette[indices[i]];
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = alpha;
  }
  return out;
}
