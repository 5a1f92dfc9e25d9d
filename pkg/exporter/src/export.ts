/**
 * Export jobs: run a pretrained model over events or frames and emit the
 * interchange files the recognition pipeline ingests.
 */

import * as tf from "@tensorflow/tfjs";
import { BinningOptions, EventBin, sliceEvents } from "./binning";
import {
  EventArrays,
  Frame,
  US_PER_S,
  readEvents,
  readFrames,
  writeDescriptors,
  writeFrames,
} from "./formats";
import { ModelSpec, modelSpec } from "./models";
import { checkpointVersion, loadCheckpoint } from "./tfio";

export interface ExporterJob {
  model: string;
  checkpoint: string;
  input: string;
  output: string;
  binning?: BinningOptions;
  /** sensor dims, needed for CSV event input */
  width?: number;
  height?: number;
  /** tfjs backend hint, e.g. "cpu" */
  device?: string;
}

async function applyDeviceHint(device?: string): Promise<void> {
  if (!device) return;
  const ok = await tf.setBackend(device);
  if (!ok) {
    throw new Error(`backend ${device} unavailable`);
  }
}

/**
 * Polarity-signed voxel grid [1, H, W, B] of one bin: each event adds its
 * polarity into the temporal slice holding its normalized timestamp.
 */
export function voxelGrid(
  events: EventArrays, bin: EventBin, slices: number,
): tf.Tensor4D {
  const { width: w, height: h } = events;
  const data = new Float32Array(h * w * slices);
  const span = Math.max(bin.tEnd - bin.tStart, 1e-9);
  for (let i = bin.lo; i < bin.hi; i++) {
    const frac = (events.t[i] - bin.tStart) / span;
    const s = Math.min(slices - 1, Math.max(0, Math.floor(frac * slices)));
    data[(events.y[i] * w + events.x[i]) * slices + s] += events.p[i];
  }
  return tf.tensor4d(data, [1, h, w, slices]);
}

function grayToRgb(gray: Float32Array, h: number, w: number): Uint8Array {
  const pixels = new Uint8Array(3 * h * w);
  for (let i = 0; i < h * w; i++) {
    const v = Math.max(0, Math.min(255, Math.round(gray[i] * 255)));
    pixels[3 * i] = v;
    pixels[3 * i + 1] = v;
    pixels[3 * i + 2] = v;
  }
  return pixels;
}

/** Events -> one reconstructed frame per bin -> EVPF file. */
export async function exportE2vid(job: ExporterJob): Promise<number> {
  const spec = modelSpec(job.model);
  if (spec.kind !== "events") {
    throw new Error(`model ${spec.name} does not consume events`);
  }
  await applyDeviceHint(job.device);
  const events = readEvents(job.input, job.width ?? 0, job.height ?? 0);
  const binning = job.binning ?? { mode: "time" as const, deltaT: 0.5 };
  const bins = sliceEvents(events, binning);
  const model = await loadCheckpoint(job.checkpoint);
  const frames: Frame[] = [];
  for (const bin of bins) {
    const frame = tf.tidy(() => {
      const voxels = voxelGrid(events, bin, spec.voxelBins ?? 5);
      const out = model.predict(voxels) as tf.Tensor;
      return out.reshape([events.height * events.width]).clipByValue(0, 1);
    });
    const gray = (await frame.data()) as Float32Array;
    frame.dispose();
    frames.push({
      pixels: grayToRgb(gray, events.height, events.width),
      tStartUs: bin.tStart * US_PER_S,
      tEndUs: bin.tEnd * US_PER_S,
    });
  }
  writeFrames(job.output, frames, events.width, events.height);
  model.dispose();
  return frames.length;
}

/** EVPF frames -> one descriptor row per frame -> EVPD file. */
export async function exportDescriptors(job: ExporterJob): Promise<number> {
  const spec = modelSpec(job.model);
  if (spec.kind !== "frames") {
    throw new Error(`model ${spec.name} does not consume frames`);
  }
  await applyDeviceHint(job.device);
  const { frames, width, height } = readFrames(job.input);
  const model = await loadCheckpoint(job.checkpoint);
  const rows: Float32Array[] = [];
  const timestampsUs: number[] = [];
  for (const frame of frames) {
    const out = tf.tidy(() => {
      const rgb = tf.tensor4d(Float32Array.from(frame.pixels, (v) => v / 255),
                              [1, height, width, 3]);
      return (model.predict(rgb) as tf.Tensor).reshape([-1]);
    });
    const row = (await out.data()) as Float32Array;
    out.dispose();
    if (row.length !== spec.descriptorDim) {
      model.dispose();
      throw new Error(
        `checkpoint emits dim ${row.length}, but ${spec.name} publishes ` +
        `${spec.descriptorDim}`);
    }
    rows.push(new Float32Array(row));
    timestampsUs.push(frame.tEndUs);
  }
  model.dispose();
  const label = `${spec.name}:${checkpointVersion(job.checkpoint)}`;
  writeDescriptors(job.output, rows, timestampsUs, label);
  return rows.length;
}

export async function runExport(job: ExporterJob): Promise<number> {
  const spec: ModelSpec = modelSpec(job.model);
  return spec.kind === "events" ? exportE2vid(job) : exportDescriptors(job);
}
