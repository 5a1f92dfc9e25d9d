/**
 * Filesystem IO handlers for tfjs model artifacts (model.json + weight
 * shards) without the native tfjs-node dependency. Checkpoints are plain
 * directories as produced by the tfjs converter.
 */

import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

export class CheckpointError extends Error {}

function toArrayBuffer(buf: Buffer): ArrayBuffer {
  const out = new ArrayBuffer(buf.byteLength);
  new Uint8Array(out).set(buf);
  return out;
}

/** IOHandler that loads model.json and its weight shards from a directory. */
export function dirLoadHandler(dir: string): tf.io.IOHandler {
  return {
    load: async () => {
      const modelPath = path.join(dir, "model.json");
      if (!fs.existsSync(modelPath)) {
        throw new CheckpointError(`checkpoint ${dir} has no model.json`);
      }
      const modelJson = JSON.parse(fs.readFileSync(modelPath, "utf-8"));
      const weightsManifest = modelJson.weightsManifest ?? [];
      const specs: tf.io.WeightsManifestEntry[] = [];
      const buffers: Buffer[] = [];
      for (const group of weightsManifest) {
        specs.push(...group.weights);
        for (const p of group.paths) {
          buffers.push(fs.readFileSync(path.join(dir, p)));
        }
      }
      return {
        modelTopology: modelJson.modelTopology,
        format: modelJson.format,
        generatedBy: modelJson.generatedBy,
        convertedBy: modelJson.convertedBy,
        userDefinedMetadata: modelJson.userDefinedMetadata,
        weightSpecs: specs,
        weightData: toArrayBuffer(Buffer.concat(buffers)),
      };
    },
  };
}

/** IOHandler that saves artifacts into a directory (model.json + weights.bin). */
export function dirSaveHandler(dir: string): tf.io.IOHandler {
  return {
    save: async (artifacts: tf.io.ModelArtifacts) => {
      fs.mkdirSync(dir, { recursive: true });
      const weightData = artifacts.weightData as ArrayBuffer;
      fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.from(weightData));
      const modelJson = {
        modelTopology: artifacts.modelTopology,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: artifacts.convertedBy,
        userDefinedMetadata: artifacts.userDefinedMetadata,
        weightsManifest: [
          { paths: ["weights.bin"], weights: artifacts.weightSpecs },
        ],
      };
      fs.writeFileSync(path.join(dir, "model.json"), JSON.stringify(modelJson));
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: "JSON" as const,
        },
      };
    },
  };
}

export async function loadCheckpoint(dir: string): Promise<tf.LayersModel> {
  try {
    return await tf.loadLayersModel(dirLoadHandler(dir));
  } catch (err) {
    if (err instanceof CheckpointError) throw err;
    throw new CheckpointError(`failed to load checkpoint ${dir}: ${err}`);
  }
}

/** Identifier recorded in output labels: metadata version or dir name. */
export function checkpointVersion(dir: string): string {
  const modelPath = path.join(dir, "model.json");
  if (fs.existsSync(modelPath)) {
    try {
      const meta = JSON.parse(fs.readFileSync(modelPath, "utf-8")).userDefinedMetadata;
      if (meta && typeof meta.version === "string") return meta.version;
    } catch {
      // fall through to the directory name
    }
  }
  return path.basename(dir);
}
