#!/usr/bin/env node
/**
 * evpr-export: run a pretrained model over events or frames and write
 * the EVPF/EVPD interchange files.
 *
 *   evpr-export export --model e2vid --checkpoint ckpt/ \
 *       --in events.evpr --out frames.evpf --dt 0.5
 *   evpr-export export --model cosplace --checkpoint ckpt/ \
 *       --in frames.evpf --out descriptors.evpd
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { BinningOptions } from "./binning";
import { MODELS } from "./models";
import { runExport } from "./export";

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .command(
      "export",
      "run a model and write an interchange file",
      (y) =>
        y
          .option("model", {
            type: "string",
            demandOption: true,
            choices: Object.keys(MODELS),
          })
          .option("checkpoint", { type: "string", demandOption: true })
          .option("in", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .option("bin-mode", {
            type: "string",
            choices: ["time", "count"],
            default: "time",
            describe: "event binning mode (events models)",
          })
          .option("dt", { type: "number", default: 0.5, describe: "bin duration (s)" })
          .option("count", { type: "number", describe: "events per count bin" })
          .option("t0", { type: "number", describe: "binning origin (s)" })
          .option("width", { type: "number", describe: "sensor width (CSV events)" })
          .option("height", { type: "number", describe: "sensor height (CSV events)" })
          .option("device", { type: "string", describe: "tfjs backend hint" }),
      async (argv) => {
        const binning: BinningOptions =
          argv["bin-mode"] === "count"
            ? { mode: "count", count: argv.count ?? 5000 }
            : { mode: "time", deltaT: argv.dt, t0: argv.t0 };
        const n = await runExport({
          model: argv.model,
          checkpoint: argv.checkpoint,
          input: argv.in as string,
          output: argv.out as string,
          binning,
          width: argv.width,
          height: argv.height,
          device: argv.device,
        });
        console.log(`${argv.model}: wrote ${n} records to ${argv.out}`);
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(err ? `error: ${err.message}` : msg);
      process.exit(err ? 1 : 2);
    })
    .parseAsync();
}

main().catch((err) => {
  console.error(`error: ${err.message ?? err}`);
  process.exit(1);
});
