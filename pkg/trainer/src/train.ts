// Fit-and-export pipeline: train a network on a system dataset, check the
// held-out relative RMS target, and export the graph JSON plus a probe of
// reference input/output pairs for cross-implementation agreement tests.

import * as fs from "node:fs";
import * as path from "node:path";

import * as ds from "./dataset.js";
import { Mlp, fitAffineExact, forward, initMlp, relativeRms, trainAdam } from "./mlp.js";
import { Probe, makeProbe, mlpToNetwork } from "./netjson.js";
import { Rng } from "./rng.js";

export const FIT_TARGET = 0.05; // held-out relative RMS

export class FitFailure extends Error {}

export interface TrainingSpec {
  system: "rayleigh-duffing" | "cartpole-feedforward" | "cartpole-residual" | "linear-debug";
  dt?: number;
  samples?: number;
  shape?: number[];
  activation?: "relu" | "tanh";
  seed?: number;
  epochs?: number;
  batch?: number;
  lr?: number;
  out: string;
  quick?: boolean;
}

export interface FittedNet {
  name: string;
  net: Mlp;
  heldoutRelRms: number;
  trainMse: number;
  probe: Probe;
  regionLo: number[];
  regionHi: number[];
}

function holdoutSplit(d: ds.Dataset, seed: number, frac = 0.1) {
  const rng = new Rng(seed ^ 0x5eed);
  const perm = rng.permutation(d.n);
  const nHold = Math.max(1, Math.floor(d.n * frac));
  const take = (idx: Int32Array, count: number, offset: number) => {
    const X = new Float64Array(count * d.dIn);
    const Y = new Float64Array(count * d.dOut);
    for (let k = 0; k < count; k++) {
      const src = idx[offset + k];
      X.set(d.X.subarray(src * d.dIn, (src + 1) * d.dIn), k * d.dIn);
      Y.set(d.Y.subarray(src * d.dOut, (src + 1) * d.dOut), k * d.dOut);
    }
    return { X, Y, n: count };
  };
  return { train: take(perm, d.n - nHold, nHold), hold: take(perm, nHold, 0) };
}

function columnStats(Z: Float64Array, n: number, d: number) {
  const mean = new Float64Array(d);
  const std = new Float64Array(d);
  for (let k = 0; k < n; k++) for (let j = 0; j < d; j++) mean[j] += Z[k * d + j];
  for (let j = 0; j < d; j++) mean[j] /= n;
  for (let k = 0; k < n; k++) {
    for (let j = 0; j < d; j++) {
      const c = Z[k * d + j] - mean[j];
      std[j] += c * c;
    }
  }
  for (let j = 0; j < d; j++) std[j] = Math.max(Math.sqrt(std[j] / n), 1e-9);
  return { mean, std };
}

function standardize(Z: Float64Array, n: number, d: number, mean: Float64Array, std: Float64Array) {
  const out = new Float64Array(Z.length);
  for (let k = 0; k < n; k++)
    for (let j = 0; j < d; j++) out[k * d + j] = (Z[k * d + j] - mean[j]) / std[j];
  return out;
}

/** Fold input/output standardisation into the first/last affine layers so
 * the exported network consumes and produces raw units. */
function foldStandardisation(net: Mlp, xm: Float64Array, xs: Float64Array, ym: Float64Array, ys: Float64Array) {
  const first = net.W[0];
  const b0 = net.b[0];
  const dIn = net.sizes[0];
  const rows0 = net.sizes[1];
  for (let i = 0; i < rows0; i++) {
    let shift = 0;
    for (let j = 0; j < dIn; j++) {
      shift += (first[i * dIn + j] * xm[j]) / xs[j];
      first[i * dIn + j] /= xs[j];
    }
    b0[i] -= shift;
  }
  const L = net.W.length - 1;
  const last = net.W[L];
  const bl = net.b[L];
  const dOut = net.sizes[net.sizes.length - 1];
  const cols = net.sizes[net.sizes.length - 2];
  for (let i = 0; i < dOut; i++) {
    for (let j = 0; j < cols; j++) last[i * cols + j] *= ys[i];
    bl[i] = bl[i] * ys[i] + ym[i];
  }
}

function fitNet(
  name: string, data: ds.Dataset, sizes: number[], act: "relu" | "tanh",
  seed: number, epochs: number, batch: number, lr: number, probeSeed: number,
): FittedNet {
  const { train, hold } = holdoutSplit(data, seed);
  let net: Mlp;
  let trainMse: number;
  if (sizes.length === 2) {
    net = fitAffineExact(train.X, train.Y, train.n, data.dIn, data.dOut);
    trainMse = 0;
  } else {
    const xStats = columnStats(train.X, train.n, data.dIn);
    const yStats = columnStats(train.Y, train.n, data.dOut);
    const Xs = standardize(train.X, train.n, data.dIn, xStats.mean, xStats.std);
    const Ys = standardize(train.Y, train.n, data.dOut, yStats.mean, yStats.std);
    net = initMlp(sizes, act, new Rng(seed));
    trainMse = trainAdam(net, Xs, Ys, train.n, {
      epochs, batch, lr, seed: seed + 1, lrDecay: 0.985, verbose: true,
    });
    foldStandardisation(net, xStats.mean, xStats.std, yStats.mean, yStats.std);
  }
  const rel = relativeRms(net, hold.X, hold.Y, hold.n);
  console.log(`${name}: held-out relative RMS ${(100 * rel).toFixed(2)}%`);
  if (rel > FIT_TARGET) {
    throw new FitFailure(`${name}: held-out relative RMS ${rel} exceeds ${FIT_TARGET}`);
  }
  const probe = makeProbe(net, data.regionLo, data.regionHi, 1000, probeSeed);
  return {
    name, net, heldoutRelRms: rel, trainMse: trainMse,
    probe, regionLo: data.regionLo, regionHi: data.regionHi,
  };
}

function writeNet(outDir: string, fitted: FittedNet, stateDim: number, distDim: number) {
  fs.mkdirSync(outDir, { recursive: true });
  const doc = mlpToNetwork(fitted.net, stateDim, distDim);
  fs.writeFileSync(path.join(outDir, `${fitted.name}.json`), JSON.stringify(doc));
  fs.writeFileSync(path.join(outDir, `${fitted.name}_probe.json`), JSON.stringify(fitted.probe));
  return doc;
}

export interface SystemResult {
  system: string;
  nets: Record<string, { file: string; heldout_rel_rms: number; region_lo: number[]; region_hi: number[] }>;
  extra: Record<string, unknown>;
}

export function runSpec(spec: TrainingSpec): SystemResult {
  const seed = spec.seed ?? 7;
  const quick = spec.quick ?? false;
  const out = spec.out;
  const result: SystemResult = { system: spec.system, nets: {}, extra: {} };

  const record = (f: FittedNet) => {
    result.nets[f.name] = {
      file: `${f.name}.json`,
      heldout_rel_rms: f.heldoutRelRms,
      region_lo: f.regionLo,
      region_hi: f.regionHi,
    };
  };

  if (spec.system === "rayleigh-duffing") {
    const data = ds.duffingDataset(spec.samples ?? (quick ? 4000 : 24_000), seed);
    const f = fitNet(
      "rayleigh_duffing", data, spec.shape ?? [2, 20, 20, 2], spec.activation ?? "relu",
      seed, spec.epochs ?? (quick ? 25 : 120), spec.batch ?? 128, spec.lr ?? 3e-3, 101,
    );
    writeNet(out, f, 2, 0);
    record(f);
  } else if (spec.system === "cartpole-feedforward") {
    const data = ds.cartpoleFeedforwardDataset(spec.samples ?? (quick ? 4000 : 60_000), seed);
    const f = fitNet(
      "cartpole_feedforward", data, spec.shape ?? [4, 100, 100, 4], spec.activation ?? "relu",
      seed, spec.epochs ?? (quick ? 8 : 45), spec.batch ?? 256, spec.lr ?? 2e-3, 102,
    );
    writeNet(out, f, 4, 0);
    record(f);
  } else if (spec.system === "cartpole-residual") {
    const { A, B } = ds.cartpoleController();
    const polData = ds.policyDataset(spec.samples ?? (quick ? 4000 : 40_000), seed + 1);
    const pol = fitNet(
      "cartpole_policy", polData, [4, 100, 1], "relu",
      seed + 1, spec.epochs ?? (quick ? 10 : 40), spec.batch ?? 256, spec.lr ?? 2e-3, 103,
    );
    writeNet(out, pol, 4, 0);
    record(pol);
    const resData = ds.residualDataset(spec.samples ?? (quick ? 4000 : 60_000), seed + 2);
    const res = fitNet(
      "cartpole_residual", resData, [5, 50, 4], "tanh",
      seed + 2, spec.epochs ?? (quick ? 15 : 150), spec.batch ?? 256, spec.lr ?? 3e-3, 104,
    );
    writeNet(out, res, 5, 0);
    record(res);
    result.extra = { A, B };

    // reference closed-loop rollouts for cross-implementation agreement
    const rollRng = new Rng(777);
    const rollouts = [];
    for (let k = 0; k < 20; k++) {
      const x0 = [
        rollRng.uniform(0.0, 0.3), rollRng.uniform(-0.2, -0.1),
        rollRng.uniform(0.262, 0.312), rollRng.uniform(-0.15, -0.05),
      ];
      const ws = [0, 1, 2].map(() => [
        rollRng.uniform(-0.05, 0.05), rollRng.uniform(-0.05, 0.05),
        rollRng.uniform(-0.05, 0.05), rollRng.uniform(-0.05, 0.05),
      ]);
      rollouts.push({ x0, ws, states: residualRollout(A, B, pol.net, res.net, x0, ws) });
    }
    fs.writeFileSync(
      path.join(out, "cartpole_residual_rollouts.json"), JSON.stringify({ rollouts }),
    );
  } else if (spec.system === "linear-debug") {
    const { A, B } = ds.cartpoleController();
    const data = ds.linearDebugDataset(spec.samples ?? 4000, seed);
    const f = fitNet("linear_debug", data, [5, 4], "relu", seed, 0, 0, 0, 105);
    writeNet(out, f, 5, 0);
    record(f);
    result.extra = { A, B };
  } else {
    throw new Error(`unknown system ${(spec as TrainingSpec).system}`);
  }

  fs.writeFileSync(
    path.join(out, `${spec.system}_meta.json`), JSON.stringify(result, null, 1),
  );
  return result;
}

/** Closed-loop rollout of the residual form A x + B u + r([x;u]) + w with
 * u from the policy net; used for cross-component agreement checks. */
export function residualRollout(
  A: number[][], B: number[][], policy: Mlp, residual: Mlp,
  x0: number[], ws: number[][],
): number[][] {
  const states = [x0.slice()];
  let x = x0.slice();
  for (const w of ws) {
    const u = forward(policy, x)[0];
    const r = forward(residual, [...x, u]);
    const next = x.map(
      (_, i) => A[i].reduce((s, v, j) => s + v * x[j], 0) + B[i][0] * u + r[i] + w[i],
    );
    states.push(next);
    x = next;
  }
  return states;
}
