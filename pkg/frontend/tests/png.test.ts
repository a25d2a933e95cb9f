import { describe, expect, it } from "vitest";

import { adler32, crc32, decodeIndexedPng, encodeIndexedPng } from "../src/png.js";
import { flatPalette, indicesToRgba, rgbaToIndices } from "../src/palette.js";

const SCHEMA = {
  names: ["background", "a", "b", "c"],
  palette: [[40, 40, 48], [106, 142, 35], [178, 34, 34], [255, 215, 0]] as
    [number, number, number][],
};

function randomIndices(n: number, labels: number, seed = 1): Uint8Array {
  // xorshift for deterministic pseudo-random masks
  let state = seed >>> 0 || 1;
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    state ^= state << 13;
    state ^= state >>> 17;
    state ^= state << 5;
    state >>>= 0;
    out[i] = state % labels;
  }
  return out;
}

describe("checksums", () => {
  it("crc32 matches the PNG reference value for 'IEND'", () => {
    expect(crc32(new TextEncoder().encode("IEND"))).toBe(0xae426082);
  });

  it("adler32 matches the zlib reference value for 'Wikipedia'", () => {
    expect(adler32(new TextEncoder().encode("Wikipedia"))).toBe(0x11e60398);
  });
});

describe("indexed PNG codec", () => {
  it("encode -> decode round trip is exact", () => {
    const indices = randomIndices(32 * 32, 4);
    const png = encodeIndexedPng(indices, 32, 32, flatPalette(SCHEMA));
    const decoded = decodeIndexedPng(png);
    expect(decoded.width).toBe(32);
    expect(decoded.height).toBe(32);
    expect(decoded.indices).toEqual(indices);
    expect(decoded.palette).toEqual(flatPalette(SCHEMA));
  });

  it("encoding is deterministic", () => {
    const indices = randomIndices(16 * 16, 4, 7);
    const a = encodeIndexedPng(indices, 16, 16, flatPalette(SCHEMA));
    const b = encodeIndexedPng(indices, 16, 16, flatPalette(SCHEMA));
    expect(a).toEqual(b);
  });

  it("produces a structurally valid PNG", () => {
    const indices = randomIndices(8 * 8, 4, 3);
    const png = encodeIndexedPng(indices, 8, 8, flatPalette(SCHEMA));
    expect(Array.from(png.slice(0, 8))).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);
    const text = (offset: number) =>
      new TextDecoder().decode(png.subarray(offset + 4, offset + 8));
    expect(text(8)).toBe("IHDR");
    // IHDR data: bit depth 8, color type 3 (indexed)
    expect(png[8 + 8 + 8]).toBe(8);
    expect(png[8 + 8 + 9]).toBe(3);
    const tail = png.subarray(png.length - 12);
    expect(new TextDecoder().decode(tail.subarray(4, 8))).toBe("IEND");
  });

  it("handles masks larger than one stored deflate block", () => {
    const size = 300; // 300*301 raw bytes > 65535 forces multiple blocks
    const indices = randomIndices(size * size, 4, 11);
    const png = encodeIndexedPng(indices, size, size, flatPalette(SCHEMA));
    expect(decodeIndexedPng(png).indices).toEqual(indices);
  });

  it("rejects out-of-palette indices", () => {
    const indices = new Uint8Array(4).fill(9);
    expect(() => encodeIndexedPng(indices, 2, 2, flatPalette(SCHEMA))).toThrow(/palette/);
  });

  it("detects corrupted chunk data", () => {
    const indices = randomIndices(8 * 8, 4, 5);
    const png = encodeIndexedPng(indices, 8, 8, flatPalette(SCHEMA));
    png[40] ^= 0xff;
    expect(() => decodeIndexedPng(png)).toThrow(/CRC/);
  });
});

describe("palette mapping", () => {
  it("rgba -> indices -> rgba round trips", () => {
    const indices = randomIndices(10 * 10, 4, 9);
    const rgba = indicesToRgba(indices, SCHEMA);
    const back = rgbaToIndices(new Uint8Array(rgba.buffer.slice(0)), SCHEMA);
    expect(back).toEqual(indices);
  });

  it("unknown colors are an error, never nearest-matched", () => {
    const rgba = new Uint8Array([1, 2, 3, 255]);
    expect(() => rgbaToIndices(rgba, SCHEMA)).toThrow(/not in the schema/);
  });
});
