// Usage:
//   node dist/cli.js <system> --out DIR [--quick]
//   node dist/cli.js all --out DIR [--quick]
//   node dist/cli.js spec <training-spec.json>
//
// Systems: rayleigh-duffing, cartpole-feedforward, cartpole-residual,
// linear-debug.

import * as fs from "node:fs";

import { TrainingSpec, runSpec } from "./train.js";

const SYSTEMS = [
  "rayleigh-duffing",
  "cartpole-feedforward",
  "cartpole-residual",
  "linear-debug",
] as const;

function parseArgs(argv: string[]): { cmd: string; out: string; quick: boolean; specPath?: string } {
  const [cmd, ...rest] = argv;
  let out = "out";
  let quick = false;
  let specPath: string | undefined;
  for (let i = 0; i < rest.length; i++) {
    if (rest[i] === "--out") out = rest[++i];
    else if (rest[i] === "--quick") quick = true;
    else if (!specPath && cmd === "spec") specPath = rest[i];
    else throw new Error(`unknown argument ${rest[i]}`);
  }
  if (!cmd) throw new Error("missing command");
  return { cmd, out, quick, specPath };
}

function main() {
  const { cmd, out, quick, specPath } = parseArgs(process.argv.slice(2));
  if (cmd === "spec") {
    if (!specPath) throw new Error("spec command needs a file path");
    const spec = JSON.parse(fs.readFileSync(specPath, "utf-8")) as TrainingSpec;
    runSpec(spec);
    return;
  }
  const systems = cmd === "all" ? SYSTEMS : [cmd as (typeof SYSTEMS)[number]];
  for (const system of systems) {
    if (!SYSTEMS.includes(system)) {
      throw new Error(`unknown system ${system}; choose from ${SYSTEMS.join(", ")}`);
    }
    console.log(`=== ${system} ===`);
    const t0 = Date.now();
    runSpec({ system, out, quick });
    console.log(`${system} done in ${((Date.now() - t0) / 1000).toFixed(1)} s`);
  }
}

main();
