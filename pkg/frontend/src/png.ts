// Canonical grayscale PNG codec for mask export/import.
//
// The layout is fixed: 8-bit grayscale, filter 0 on every row, a single
// IDAT carrying a zlib stream of stored (uncompressed) deflate blocks.
// The restoration service writes masks in the same canonical form, so an
// export -> import -> re-export round trip is byte-identical on either side.

const PNG_SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

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

function crc32(bytes: Uint8Array): number {
  let crc = 0xffffffff;
  for (const b of bytes) {
    crc = CRC_TABLE[(crc ^ b) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (const byte of bytes) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

function chunk(tag: string, body: Uint8Array): Uint8Array {
  const tagBytes = new Uint8Array([...tag].map((c) => c.charCodeAt(0)));
  const tagged = concat([tagBytes, body]);
  return concat([u32be(body.length), tagged, u32be(crc32(tagged))]);
}

/** Encode a 255=keep mask raster as a canonical grayscale PNG. */
export function encodeMaskPng(data: Uint8Array, width: number, height: number): Uint8Array {
  if (data.length !== width * height) {
    throw new Error(`mask has ${data.length} bytes, expected ${width * height}`);
  }
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    raw.set(data.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }

  const zlibParts: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  for (let off = 0; off < raw.length; off += 65535) {
    const piece = raw.subarray(off, Math.min(off + 65535, raw.length));
    const final = off + 65535 >= raw.length ? 1 : 0;
    const header = new Uint8Array(5);
    header[0] = final;
    header[1] = piece.length & 0xff;
    header[2] = piece.length >>> 8;
    header[3] = ~piece.length & 0xff;
    header[4] = (~piece.length >>> 8) & 0xff;
    zlibParts.push(header, piece);
  }
  zlibParts.push(u32be(adler32(raw)));

  const ihdr = concat([u32be(width), u32be(height), new Uint8Array([8, 0, 0, 0, 0])]);
  return concat([
    new Uint8Array(PNG_SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", concat(zlibParts)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

export interface DecodedMask {
  width: number;
  height: number;
  data: Uint8Array;
}

/** Decode a canonical grayscale PNG back to the raw mask raster. */
export function decodeMaskPng(bytes: Uint8Array): DecodedMask {
  for (let i = 0; i < PNG_SIGNATURE.length; i++) {
    if (bytes[i] !== PNG_SIGNATURE[i]) throw new Error("not a PNG file");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let off = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (off < bytes.length) {
    const len = view.getUint32(off);
    const tag = String.fromCharCode(bytes[off + 4], bytes[off + 5], bytes[off + 6], bytes[off + 7]);
    const body = bytes.subarray(off + 8, off + 8 + len);
    if (tag === "IHDR") {
      width = view.getUint32(off + 8);
      height = view.getUint32(off + 12);
      const bitDepth = bytes[off + 16];
      const colorType = bytes[off + 17];
      if (bitDepth !== 8 || colorType !== 0) {
        throw new Error(`unsupported PNG: bit depth ${bitDepth}, color type ${colorType}`);
      }
      if (bytes[off + 20] !== 0) throw new Error("interlaced PNG not supported");
    } else if (tag === "IDAT") {
      idat.push(body);
    } else if (tag === "IEND") {
      break;
    }
    off += 12 + len;
  }
  if (width === 0 || height === 0) throw new Error("PNG missing IHDR");

  const stream = concat(idat);
  if ((stream[0] & 0x0f) !== 8) throw new Error("unsupported zlib compression method");
  const raw = inflateStored(stream.subarray(2, stream.length - 4));
  if (raw.length !== height * (width + 1)) {
    throw new Error(`decoded ${raw.length} bytes, expected ${height * (width + 1)}`);
  }
  const data = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) {
      throw new Error("only filter type 0 is supported");
    }
    data.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, data };
}

function inflateStored(deflate: Uint8Array): Uint8Array {
  const parts: Uint8Array[] = [];
  let off = 0;
  for (;;) {
    const header = deflate[off];
    if ((header & 0x06) !== 0) {
      throw new Error("only stored deflate blocks are supported");
    }
    const len = deflate[off + 1] | (deflate[off + 2] << 8);
    parts.push(deflate.subarray(off + 5, off + 5 + len));
    off += 5 + len;
    if (header & 1) break;
  }
  return concat(parts);
}
