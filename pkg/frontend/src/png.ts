/**
 * Minimal indexed-palette PNG codec.
 *
 * The encoder emits bit-depth-8 color-type-3 PNGs whose zlib stream uses
 * stored (uncompressed) deflate blocks: byte-exact, dependency-free, and
 * deterministic, which is what mask round-trip guarantees need. The decoder
 * handles exactly this subset (enough for tests and for re-importing our own
 * exports); server-produced masks arrive in the studio through the canvas
 * and the palette lookup instead.
 */

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(data: Uint8Array): number {
  let crc = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    crc = CRC_TABLE[(crc ^ data[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

export function adler32(data: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < data.length; i++) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function be32(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff,
                         (value >>> 8) & 0xff, value & 0xff]);
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  const body = new Uint8Array(typeBytes.length + data.length);
  body.set(typeBytes, 0);
  body.set(data, typeBytes.length);
  const out = new Uint8Array(4 + body.length + 4);
  out.set(be32(data.length), 0);
  out.set(body, 4);
  out.set(be32(crc32(body)), 4 + body.length);
  return out;
}

/** zlib-wrap raw bytes using stored deflate blocks only. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 65535;
  for (let offset = 0; offset < raw.length || offset === 0; offset += max) {
    const piece = raw.subarray(offset, Math.min(offset + max, raw.length));
    const final = offset + max >= raw.length ? 1 : 0;
    const header = new Uint8Array(5);
    header[0] = final;
    header[1] = piece.length & 0xff;
    header[2] = (piece.length >>> 8) & 0xff;
    header[3] = ~piece.length & 0xff;
    header[4] = (~piece.length >>> 8) & 0xff;
    blocks.push(header, piece);
    if (final) break;
  }
  blocks.push(be32(adler32(raw)));
  let total = 0;
  for (const b of blocks) total += b.length;
  const out = new Uint8Array(total);
  let at = 0;
  for (const b of blocks) {
    out.set(b, at);
    at += b.length;
  }
  return out;
}

export function encodeIndexedPng(indices: Uint8Array, width: number, height: number,
                                 palette: Uint8Array): Uint8Array {
  if (indices.length !== width * height) {
    throw new Error(`index buffer has ${indices.length} entries, expected ${width * height}`);
  }
  if (palette.length % 3 !== 0 || palette.length === 0 || palette.length > 768) {
    throw new Error("palette must be 3*n bytes for 1..256 entries");
  }
  const numEntries = palette.length / 3;
  for (const v of indices) {
    if (v >= numEntries) throw new Error(`index ${v} outside the ${numEntries}-entry palette`);
  }

  const ihdr = new Uint8Array(13);
  ihdr.set(be32(width), 0);
  ihdr.set(be32(height), 4);
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 3;   // color type: indexed
  ihdr[10] = 0;  // compression
  ihdr[11] = 0;  // filter method
  ihdr[12] = 0;  // no interlace

  // raw scanlines: filter byte 0 + row of indices
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0;
    raw.set(indices.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }

  const parts = [new Uint8Array(SIGNATURE), chunk("IHDR", ihdr),
                 chunk("PLTE", palette), chunk("IDAT", zlibStored(raw)),
                 chunk("IEND", new Uint8Array(0))];
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Uint8Array(total);
  let at = 0;
  for (const p of parts) {
    out.set(p, at);
    at += p.length;
  }
  return out;
}

export interface DecodedPng {
  width: number;
  height: number;
  indices: Uint8Array;
  palette: Uint8Array;
}

/** Decode PNGs produced by encodeIndexedPng (stored-block zlib, filter 0). */
export function decodeIndexedPng(bytes: Uint8Array): DecodedPng {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG: bad signature");
  }
  let at = 8;
  let width = 0;
  let height = 0;
  let palette: Uint8Array | null = null;
  const idat: Uint8Array[] = [];
  while (at < bytes.length) {
    const length = (bytes[at] << 24 | bytes[at + 1] << 16 | bytes[at + 2] << 8
                    | bytes[at + 3]) >>> 0;
    const type = new TextDecoder().decode(bytes.subarray(at + 4, at + 8));
    const data = bytes.subarray(at + 8, at + 8 + length);
    const stored = (bytes[at + 8 + length] << 24 | bytes[at + 9 + length] << 16
                    | bytes[at + 10 + length] << 8 | bytes[at + 11 + length]) >>> 0;
    const check = crc32(bytes.subarray(at + 4, at + 8 + length));
    if (stored !== check) throw new Error(`chunk ${type}: CRC mismatch`);
    if (type === "IHDR") {
      width = (data[0] << 24 | data[1] << 16 | data[2] << 8 | data[3]) >>> 0;
      height = (data[4] << 24 | data[5] << 16 | data[6] << 8 | data[7]) >>> 0;
      if (data[8] !== 8 || data[9] !== 3) {
        throw new Error("decoder supports 8-bit indexed PNGs only");
      }
    } else if (type === "PLTE") {
      palette = new Uint8Array(data);
    } else if (type === "IDAT") {
      idat.push(new Uint8Array(data));
    } else if (type === "IEND") {
      break;
    }
    at += 12 + length;
  }
  if (!palette) throw new Error("missing PLTE chunk");

  let zlen = 0;
  for (const d of idat) zlen += d.length;
  const z = new Uint8Array(zlen);
  let zat = 0;
  for (const d of idat) {
    z.set(d, zat);
    zat += d.length;
  }

  // inflate stored blocks
  if ((z[0] & 0x0f) !== 8) throw new Error("unsupported zlib compression method");
  const raw: number[] = [];
  let p = 2;
  for (;;) {
    const final = z[p] & 1;
    const btype = (z[p] >> 1) & 3;
    if (btype !== 0) throw new Error("decoder supports stored deflate blocks only");
    const len = z[p + 1] | (z[p + 2] << 8);
    const nlen = z[p + 3] | (z[p + 4] << 8);
    if ((len ^ nlen) !== 0xffff) throw new Error("stored block LEN/NLEN mismatch");
    for (let i = 0; i < len; i++) raw.push(z[p + 5 + i]);
    p += 5 + len;
    if (final) break;
  }
  const rawArr = new Uint8Array(raw);
  const expectedAdler = (z[p] << 24 | z[p + 1] << 16 | z[p + 2] << 8 | z[p + 3]) >>> 0;
  if (adler32(rawArr) !== expectedAdler) throw new Error("zlib adler32 mismatch");

  const indices = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (rawArr[y * (width + 1)] !== 0) throw new Error("unsupported scanline filter");
    indices.set(rawArr.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, indices, palette };
}
