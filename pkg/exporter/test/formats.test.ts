import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterAll, describe, expect, it } from "vitest";
import { crc32 } from "../src/crc32";
import { sliceByCount, sliceByTime } from "../src/binning";
import {
  EventArrays,
  Frame,
  FormatError,
  readDescriptors,
  readEvents,
  readEventsCsv,
  readFrames,
  writeDescriptors,
  writeFrames,
} from "../src/formats";
import { writeEventsBinaryFixture } from "./helpers";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "evpr-exporter-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

describe("crc32", () => {
  it("matches the standard test vector", () => {
    expect(crc32(Buffer.from("123456789", "ascii"))).toBe(0xcbf43926);
  });

  it("empty input is zero", () => {
    expect(crc32(new Uint8Array(0))).toBe(0);
  });
});

describe("event reading", () => {
  it("reads the binary format", () => {
    const file = path.join(tmp, "events.evpr");
    writeEventsBinaryFixture(file, [
      [1000, 3, 2, 1],
      [2500, 7, 5, -1],
    ], 16, 8);
    const ev = readEvents(file);
    expect(ev.width).toBe(16);
    expect(ev.height).toBe(8);
    expect(Array.from(ev.x)).toEqual([3, 7]);
    expect(ev.t[0]).toBeCloseTo(0.001, 9);
    expect(Array.from(ev.p)).toEqual([1, -1]);
  });

  it("rejects bad magic", () => {
    const file = path.join(tmp, "bad.evpr");
    fs.writeFileSync(file, Buffer.alloc(20));
    expect(() => readEvents(file)).toThrow(FormatError);
  });

  it("reads CSV with unit header and 0/1 polarity", () => {
    const file = path.join(tmp, "events.csv");
    fs.writeFileSync(file, "# units=us\n2000,1,1,0\n1000,2,2,1\n");
    const ev = readEventsCsv(file, 4, 4);
    expect(Array.from(ev.x)).toEqual([2, 1]); // sorted by t
    expect(Array.from(ev.p)).toEqual([1, -1]);
  });
});

describe("binning", () => {
  const events: EventArrays = {
    t: Float64Array.from([0.05, 0.15, 0.45]),
    x: Uint16Array.from([0, 1, 2]),
    y: Uint16Array.from([0, 0, 0]),
    p: Int8Array.from([1, 1, -1]),
    width: 4,
    height: 4,
  };

  it("time bins keep window indices and skip empty windows", () => {
    const bins = sliceByTime(events, 0.1, 0.0);
    expect(bins.map((b) => b.index)).toEqual([0, 1, 4]);
    expect(bins.map((b) => b.hi - b.lo)).toEqual([1, 1, 1]);
    expect(bins[2].tStart).toBeCloseTo(0.4, 12);
  });

  it("count bins chunk in order", () => {
    const bins = sliceByCount(events, 2);
    expect(bins.map((b) => b.hi - b.lo)).toEqual([2, 1]);
  });
});

describe("EVPF frames", () => {
  function frame(i: number, w: number, h: number): Frame {
    const pixels = new Uint8Array(3 * h * w);
    pixels.fill(i * 10);
    return { pixels, tStartUs: i * 500_000, tEndUs: (i + 1) * 500_000 };
  }

  it("round trips", () => {
    const file = path.join(tmp, "frames.evpf");
    const frames = [frame(0, 4, 4), frame(1, 4, 4)];
    writeFrames(file, frames, 4, 4);
    const back = readFrames(file);
    expect(back.width).toBe(4);
    expect(back.frames.length).toBe(2);
    expect(back.frames[1].tEndUs).toBe(1_000_000);
    expect(Buffer.from(back.frames[0].pixels).equals(Buffer.from(frames[0].pixels))).toBe(true);
  });

  it("rejects corrupted pixels via CRC", () => {
    const file = path.join(tmp, "corrupt.evpf");
    writeFrames(file, [frame(2, 4, 4)], 4, 4);
    const blob = fs.readFileSync(file);
    blob[40] ^= 0xff;
    fs.writeFileSync(file, blob);
    expect(() => readFrames(file)).toThrow(/CRC/);
  });

  it("supports zero frames", () => {
    const file = path.join(tmp, "empty.evpf");
    writeFrames(file, [], 4, 4);
    expect(readFrames(file).frames).toEqual([]);
  });
});

describe("EVPD descriptors", () => {
  it("round trips rows, timestamps, and label", () => {
    const file = path.join(tmp, "d.evpd");
    const rows = [Float32Array.from([1, 2, 3]), Float32Array.from([4, 5, 6])];
    writeDescriptors(file, rows, [100, 200], "cosplace:v1");
    const back = readDescriptors(file);
    expect(back.dim).toBe(3);
    expect(back.label).toBe("cosplace:v1");
    expect(back.timestampsUs).toEqual([100, 200]);
    expect(Array.from(back.rows[1])).toEqual([4, 5, 6]);
  });

  it("rejects non-increasing timestamps", () => {
    const file = path.join(tmp, "bad.evpd");
    expect(() =>
      writeDescriptors(file, [Float32Array.from([1]), Float32Array.from([2])],
                       [200, 100], ""),
    ).toThrow(/increasing/);
  });

  it("rejects corrupted payload via CRC", () => {
    const file = path.join(tmp, "crc.evpd");
    writeDescriptors(file, [Float32Array.from([1, 2])], [100], "x");
    const blob = fs.readFileSync(file);
    blob[19] ^= 0x01;
    fs.writeFileSync(file, blob);
    expect(() => readDescriptors(file)).toThrow(/CRC/);
  });
});
