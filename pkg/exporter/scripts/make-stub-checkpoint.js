#!/usr/bin/env node
/**
 * Write an untrained stand-in checkpoint with the interface of a released
 * model, for smoke tests and pipeline dry runs without the real weights.
 *
 *   node scripts/make-stub-checkpoint.js --model e2vid --width 64 --height 48 --out ckpt/
 *   node scripts/make-stub-checkpoint.js --model cosplace --width 64 --height 48 --out ckpt/
 */

const tf = require("@tensorflow/tfjs");
const { dirSaveHandler } = require("../dist/tfio");
const { MODELS } = require("../dist/models");

function arg(name, fallback) {
  const i = process.argv.indexOf(`--${name}`);
  if (i === -1 || i + 1 >= process.argv.length) {
    if (fallback !== undefined) return fallback;
    console.error(`missing --${name}`);
    process.exit(2);
  }
  return process.argv[i + 1];
}

async function main() {
  const model = arg("model");
  const width = Number(arg("width"));
  const height = Number(arg("height"));
  const out = arg("out");
  const seed = Number(arg("seed", "17"));
  const spec = MODELS[model];
  if (!spec) {
    console.error(`unknown model ${model}`);
    process.exit(2);
  }
  const net = tf.sequential();
  if (spec.kind === "events") {
    net.add(tf.layers.conv2d({
      inputShape: [height, width, spec.voxelBins],
      filters: 1, kernelSize: 1, activation: "sigmoid",
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
    }));
  } else {
    net.add(tf.layers.conv2d({
      inputShape: [height, width, 3], filters: 4, kernelSize: 3,
      activation: "relu",
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
    }));
    net.add(tf.layers.globalAveragePooling2d({}));
    net.add(tf.layers.dense({
      units: spec.descriptorDim,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
    }));
  }
  await net.save(dirSaveHandler(out));
  console.log(`stub ${model} checkpoint -> ${out}`);
}

main().catch((err) => {
  console.error(err.message ?? err);
  process.exit(1);
});
