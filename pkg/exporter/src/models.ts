/**
 * Model registry: which inputs each selector consumes and what it emits.
 *
 * The event-to-video model consumes per-bin voxel grids and emits a
 * grayscale image; the place-recognition extractors consume RGB frames
 * and emit one global descriptor per frame at their published size.
 * All models run as released from converted checkpoints; nothing here
 * is trained or fine-tuned.
 */

export type ModelKind = "events" | "frames";

export interface ModelSpec {
  name: string;
  kind: ModelKind;
  /** published descriptor size (frames models) */
  descriptorDim?: number;
  /** temporal slices per voxel grid (events models) */
  voxelBins?: number;
}

export const MODELS: Record<string, ModelSpec> = {
  e2vid: { name: "e2vid", kind: "events", voxelBins: 5 },
  netvlad: { name: "netvlad", kind: "frames", descriptorDim: 4096 },
  cosplace: { name: "cosplace", kind: "frames", descriptorDim: 512 },
  mixvpr: { name: "mixvpr", kind: "frames", descriptorDim: 4096 },
  megaloc: { name: "megaloc", kind: "frames", descriptorDim: 8448 },
};

export function modelSpec(name: string): ModelSpec {
  const spec = MODELS[name];
  if (!spec) {
    throw new Error(
      `unknown model ${JSON.stringify(name)}; known: ${Object.keys(MODELS).join(", ")}`);
  }
  return spec;
}
