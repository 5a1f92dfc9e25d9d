/**
 * Binary/CSV interchange formats shared with the recognition pipeline.
 *
 * Event binary (EVPR): magic "EVPR", version u16 (=1), width u16,
 * height u16, count u64; records of (t u64 microseconds, x u16, y u16,
 * p i8). Little-endian.
 *
 * Frame file (EVPF): magic "EVPF", version u16 (=1), width u16,
 * height u16, count u64; per frame t_start u64 + t_end u64 microseconds,
 * 3*H*W bytes of row-major interleaved RGB, then CRC-32 of the record
 * bytes (timestamps + pixels).
 *
 * Descriptor file (EVPD): magic "EVPD", version u16 (=1), count u64,
 * dim u32; count*dim float32 rows, count u64 timestamps (microseconds),
 * u32-length-prefixed UTF-8 label, CRC-32 of the payload.
 */

import * as fs from "fs";
import { crc32 } from "./crc32";

export const US_PER_S = 1_000_000;

export interface EventArrays {
  /** timestamps in seconds, sorted ascending */
  t: Float64Array;
  x: Uint16Array;
  y: Uint16Array;
  /** polarity, -1 or +1 */
  p: Int8Array;
  width: number;
  height: number;
}

export interface Frame {
  /** interleaved RGB bytes, 3 * height * width, row-major */
  pixels: Uint8Array;
  tStartUs: number;
  tEndUs: number;
}

export class FormatError extends Error {}

function readHeader(view: DataView, magic: string): { a: number; b: number; count: number } {
  const got = String.fromCharCode(
    view.getUint8(0), view.getUint8(1), view.getUint8(2), view.getUint8(3));
  if (got !== magic) {
    throw new FormatError(`bad magic ${JSON.stringify(got)}, expected ${magic}`);
  }
  const version = view.getUint16(4, true);
  if (version !== 1) {
    throw new FormatError(`unsupported ${magic} version ${version}`);
  }
  return {
    a: view.getUint16(6, true),
    b: view.getUint16(8, true),
    count: Number(view.getBigUint64(10, true)),
  };
}

export function readEventsBinary(path: string): EventArrays {
  const buf = fs.readFileSync(path);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.length < 18) {
    throw new FormatError(`truncated event header: ${buf.length} bytes`);
  }
  const { a: width, b: height, count } = readHeader(view, "EVPR");
  const recordSize = 13;
  if (buf.length !== 18 + count * recordSize) {
    throw new FormatError(
      `expected ${18 + count * recordSize} bytes for ${count} events, got ${buf.length}`);
  }
  const t = new Float64Array(count);
  const x = new Uint16Array(count);
  const y = new Uint16Array(count);
  const p = new Int8Array(count);
  let off = 18;
  for (let i = 0; i < count; i++) {
    t[i] = Number(view.getBigUint64(off, true)) / US_PER_S;
    x[i] = view.getUint16(off + 8, true);
    y[i] = view.getUint16(off + 10, true);
    const rawP = view.getInt8(off + 12);
    if (rawP !== 1 && rawP !== -1 && rawP !== 0) {
      throw new FormatError(`event ${i}: polarity ${rawP} not in {-1, 0, +1}`);
    }
    p[i] = rawP === 0 ? -1 : rawP;
    if (x[i] >= width || y[i] >= height) {
      throw new FormatError(`event ${i}: (${x[i]}, ${y[i]}) outside ${width}x${height}`);
    }
    off += recordSize;
  }
  for (let i = 1; i < count; i++) {
    if (t[i] < t[i - 1]) throw new FormatError(`events not sorted at index ${i}`);
  }
  return { t, x, y, p, width, height };
}

export function readEventsCsv(path: string, width: number, height: number): EventArrays {
  const text = fs.readFileSync(path, "utf-8");
  let unitScale = 1.0;
  const rows: Array<[number, number, number, number]> = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    if (line.startsWith("#")) {
      const directive = line.slice(1).replace(/\s+/g, "");
      if (directive === "units=us") unitScale = 1.0 / US_PER_S;
      else if (directive === "units=s") unitScale = 1.0;
      continue;
    }
    const parts = line.split(",");
    if (parts.length !== 4) {
      throw new FormatError(`line ${i + 1}: expected 4 fields, got ${parts.length}`);
    }
    const t = Number(parts[0]) * unitScale;
    const x = Number(parts[1]);
    const y = Number(parts[2]);
    let p = Number(parts[3]);
    if (!Number.isFinite(t) || !Number.isInteger(x) || !Number.isInteger(y)) {
      throw new FormatError(`line ${i + 1}: malformed record`);
    }
    if (p === 0) p = -1;
    if (p !== 1 && p !== -1) {
      throw new FormatError(`line ${i + 1}: polarity ${parts[3]} not in {-1, 0, +1}`);
    }
    if (x < 0 || x >= width || y < 0 || y >= height) {
      throw new FormatError(`line ${i + 1}: (${x}, ${y}) outside ${width}x${height}`);
    }
    rows.push([t, x, y, p]);
  }
  rows.sort((a, b) => a[0] - b[0]);
  const n = rows.length;
  const out: EventArrays = {
    t: new Float64Array(n), x: new Uint16Array(n), y: new Uint16Array(n),
    p: new Int8Array(n), width, height,
  };
  rows.forEach(([t, x, y, p], i) => {
    out.t[i] = t; out.x[i] = x; out.y[i] = y; out.p[i] = p;
  });
  return out;
}

/** Sniff EVPR magic vs CSV text. CSV needs sensor dims. */
export function readEvents(path: string, width = 0, height = 0): EventArrays {
  const fd = fs.openSync(path, "r");
  const head = Buffer.alloc(4);
  fs.readSync(fd, head, 0, 4, 0);
  fs.closeSync(fd);
  if (head.toString("latin1") === "EVPR") return readEventsBinary(path);
  if (width <= 0 || height <= 0) {
    throw new FormatError("CSV events need explicit sensor dims");
  }
  return readEventsCsv(path, width, height);
}

export function writeFrames(path: string, frames: Frame[], width: number, height: number): void {
  const frameBytes = 3 * height * width;
  const recordSize = 16 + frameBytes + 4;
  const buf = Buffer.alloc(18 + frames.length * recordSize);
  buf.write("EVPF", 0, "latin1");
  buf.writeUInt16LE(1, 4);
  buf.writeUInt16LE(width, 6);
  buf.writeUInt16LE(height, 8);
  buf.writeBigUInt64LE(BigInt(frames.length), 10);
  let off = 18;
  for (const f of frames) {
    if (f.pixels.length !== frameBytes) {
      throw new FormatError(
        `frame pixel buffer has ${f.pixels.length} bytes, expected ${frameBytes}`);
    }
    buf.writeBigUInt64LE(BigInt(Math.round(f.tStartUs)), off);
    buf.writeBigUInt64LE(BigInt(Math.round(f.tEndUs)), off + 8);
    buf.set(f.pixels, off + 16);
    const record = buf.subarray(off, off + 16 + frameBytes);
    buf.writeUInt32LE(crc32(record), off + 16 + frameBytes);
    off += recordSize;
  }
  fs.writeFileSync(path, buf);
}

export function readFrames(path: string): { frames: Frame[]; width: number; height: number } {
  const buf = fs.readFileSync(path);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.length < 18) throw new FormatError("truncated EVPF header");
  const { a: width, b: height, count } = readHeader(view, "EVPF");
  const frameBytes = 3 * height * width;
  const recordSize = 16 + frameBytes + 4;
  if (buf.length !== 18 + count * recordSize) {
    throw new FormatError(`truncated EVPF payload for ${count} frames`);
  }
  const frames: Frame[] = [];
  let off = 18;
  for (let i = 0; i < count; i++) {
    const record = buf.subarray(off, off + 16 + frameBytes);
    const stored = view.getUint32(off + 16 + frameBytes, true);
    if (crc32(record) !== stored) throw new FormatError(`frame ${i}: CRC mismatch`);
    frames.push({
      tStartUs: Number(view.getBigUint64(off, true)),
      tEndUs: Number(view.getBigUint64(off + 8, true)),
      pixels: new Uint8Array(buf.subarray(off + 16, off + 16 + frameBytes)),
    });
    off += recordSize;
  }
  return { frames, width, height };
}

export function writeDescriptors(
  path: string, rows: Float32Array[], timestampsUs: number[], label: string,
): void {
  if (rows.length !== timestampsUs.length) {
    throw new FormatError("descriptor row count != timestamp count");
  }
  for (let i = 1; i < timestampsUs.length; i++) {
    if (timestampsUs[i] <= timestampsUs[i - 1]) {
      throw new FormatError("timestamps must be strictly increasing");
    }
  }
  const dim = rows.length ? rows[0].length : 0;
  const labelBytes = Buffer.from(label, "utf-8");
  const payload = Buffer.alloc(rows.length * dim * 4 + rows.length * 8 + 4 + labelBytes.length);
  let off = 0;
  for (const row of rows) {
    if (row.length !== dim) throw new FormatError("ragged descriptor rows");
    for (const v of row) {
      if (!Number.isFinite(v)) throw new FormatError("non-finite descriptor value");
      payload.writeFloatLE(v, off);
      off += 4;
    }
  }
  for (const ts of timestampsUs) {
    payload.writeBigUInt64LE(BigInt(Math.round(ts)), off);
    off += 8;
  }
  payload.writeUInt32LE(labelBytes.length, off);
  payload.set(labelBytes, off + 4);

  const header = Buffer.alloc(18);
  header.write("EVPD", 0, "latin1");
  header.writeUInt16LE(1, 4);
  header.writeBigUInt64LE(BigInt(rows.length), 6);
  header.writeUInt32LE(dim, 14);
  const crc = Buffer.alloc(4);
  crc.writeUInt32LE(crc32(payload));
  fs.writeFileSync(path, Buffer.concat([header, payload, crc]));
}

export function readDescriptors(
  path: string,
): { rows: Float32Array[]; timestampsUs: number[]; label: string; dim: number } {
  const buf = fs.readFileSync(path);
  if (buf.length < 22) throw new FormatError("truncated EVPD file");
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const magic = buf.subarray(0, 4).toString("latin1");
  if (magic !== "EVPD") throw new FormatError(`bad magic ${magic}`);
  if (view.getUint16(4, true) !== 1) throw new FormatError("unsupported EVPD version");
  const count = Number(view.getBigUint64(6, true));
  const dim = view.getUint32(14, true);
  const payload = buf.subarray(18, buf.length - 4);
  const stored = view.getUint32(buf.length - 4, true);
  if (crc32(payload) !== stored) throw new FormatError("EVPD payload CRC mismatch");
  const rows: Float32Array[] = [];
  let off = 0;
  for (let i = 0; i < count; i++) {
    const row = new Float32Array(dim);
    for (let d = 0; d < dim; d++) {
      row[d] = payload.readFloatLE(off);
      off += 4;
    }
    rows.push(row);
  }
  const timestampsUs: number[] = [];
  for (let i = 0; i < count; i++) {
    timestampsUs.push(Number(payload.readBigUInt64LE(off)));
    off += 8;
  }
  const labelLen = payload.readUInt32LE(off);
  const label = payload.subarray(off + 4, off + 4 + labelLen).toString("utf-8");
  return { rows, timestampsUs, label, dim };
}
