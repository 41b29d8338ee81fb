import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { MaskLayer } from "../src/mask.js";
import { decodeMaskPng, encodeMaskPng } from "../src/png.js";

function fixture(name: string): Uint8Array {
  return new Uint8Array(readFileSync(fileURLToPath(new URL(`fixtures/${name}`, import.meta.url))));
}

describe("canonical mask PNG codec", () => {
  it("round trips encode -> decode -> encode byte-identically", () => {
    const mask = new MaskLayer(33, 21);
    mask.brush(10, 10, 6);
    mask.brush(25, 5, 3);
    const first = encodeMaskPng(mask.data, 33, 21);
    const decoded = decodeMaskPng(first);
    expect(decoded.width).toBe(33);
    expect(decoded.height).toBe(21);
    expect(decoded.data).toEqual(mask.data);
    const second = encodeMaskPng(decoded.data, decoded.width, decoded.height);
    expect(second).toEqual(first);
  });

  it("produces the same bytes as the service-side encoder", () => {
    // fixture written by the Python encoder: 16x16 keep with a 6x6 hole
    const data = new Uint8Array(16 * 16).fill(255);
    for (let y = 5; y < 11; y++) {
      for (let x = 5; x < 11; x++) data[y * 16 + x] = 0;
    }
    expect(encodeMaskPng(data, 16, 16)).toEqual(fixture("mask_16x16_hole.png"));
  });

  it("re-encodes a service-exported procedural mask byte-identically", () => {
    const bytes = fixture("mask_32x32_seed3.png");
    const decoded = decodeMaskPng(bytes);
    expect(decoded.width).toBe(32);
    expect(decoded.height).toBe(32);
    expect(encodeMaskPng(decoded.data, 32, 32)).toEqual(bytes);
  });

  it("handles rasters larger than one stored deflate block", () => {
    const w = 300;
    const h = 300; // 300*301 bytes > 65535, forces multiple blocks
    const data = new Uint8Array(w * h);
    for (let i = 0; i < data.length; i++) data[i] = i % 7 === 0 ? 0 : 255;
    const decoded = decodeMaskPng(encodeMaskPng(data, w, h));
    expect(decoded.data).toEqual(data);
  });

  it("rejects junk and mismatched buffers", () => {
    expect(() => decodeMaskPng(new Uint8Array([1, 2, 3, 4]))).toThrow(/not a PNG/);
    expect(() => encodeMaskPng(new Uint8Array(10), 4, 4)).toThrow(/expected 16/);
  });
});
