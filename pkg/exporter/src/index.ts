export { crc32 } from "./crc32";
export {
  EventArrays,
  Frame,
  FormatError,
  US_PER_S,
  readDescriptors,
  readEvents,
  readEventsBinary,
  readEventsCsv,
  readFrames,
  writeDescriptors,
  writeFrames,
} from "./formats";
export { BinningOptions, EventBin, sliceByCount, sliceByTime, sliceEvents } from "./binning";
export { MODELS, ModelKind, ModelSpec, modelSpec } from "./models";
export { CheckpointError, checkpointVersion, dirLoadHandler, dirSaveHandler, loadCheckpoint } from "./tfio";
export { ExporterJob, exportDescriptors, exportE2vid, runExport, voxelGrid } from "./export";
