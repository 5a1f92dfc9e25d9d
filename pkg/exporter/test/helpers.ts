import * as fs from "fs";

/** Write an EVPR event binary: [tUs, x, y, p] records plus header. */
export function writeEventsBinaryFixture(
  file: string,
  events: Array<[number, number, number, number]>,
  width: number,
  height: number,
): void {
  const buf = Buffer.alloc(18 + events.length * 13);
  buf.write("EVPR", 0, "latin1");
  buf.writeUInt16LE(1, 4);
  buf.writeUInt16LE(width, 6);
  buf.writeUInt16LE(height, 8);
  buf.writeBigUInt64LE(BigInt(events.length), 10);
  let off = 18;
  for (const [tUs, x, y, p] of events) {
    buf.writeBigUInt64LE(BigInt(tUs), off);
    buf.writeUInt16LE(x, off + 8);
    buf.writeUInt16LE(y, off + 10);
    buf.writeInt8(p, off + 12);
    off += 13;
  }
  fs.writeFileSync(file, buf);
}
