// Dataset generation for the benchmark fixtures.  Every dataset is fully
// determined by its seed; inputs mix uniform coverage of a training region
// with states collected along closed-loop rollouts so the fit is best
// where trajectories actually go.

import * as cp from "./cartpole.js";
import * as duffing from "./duffing.js";
import { Mat, matVec } from "./mat.js";
import { lqrGain } from "./lqr.js";
import { Rng } from "./rng.js";

export interface Dataset {
  X: Float64Array;
  Y: Float64Array;
  n: number;
  dIn: number;
  dOut: number;
  regionLo: number[];
  regionHi: number[];
}

export const DUFFING_REGION = { lo: [-2.2, -2.2], hi: [2.2, 2.2] };
export const CARTPOLE_REGION = { lo: [-1.0, -3.0, -0.7, -3.0], hi: [3.5, 3.0, 0.7, 3.0] };
export const RESIDUAL_X_REGION = { lo: [-0.5, -1.5, -0.5, -2.0], hi: [1.0, 1.5, 0.5, 2.0] };
export const RESIDUAL_U_RANGE = 12.0;

function pack(rows: number[][]): Float64Array {
  const d = rows[0].length;
  const out = new Float64Array(rows.length * d);
  rows.forEach((r, i) => out.set(r, i * d));
  return out;
}

export function duffingDataset(samples: number, seed: number): Dataset {
  const rng = new Rng(seed);
  const xs: number[][] = [];
  const ys: number[][] = [];
  const nTraj = Math.floor(samples * 0.4);
  let state: [number, number] = [0, 0];
  let stepsLeft = 0;
  for (let k = 0; k < nTraj; k++) {
    if (stepsLeft === 0) {
      state = [rng.uniform(-1.6, 1.6), rng.uniform(-1.6, 1.6)];
      stepsLeft = 40;
    }
    xs.push([state[0], state[1]]);
    state = duffing.rk4Step(state);
    ys.push([state[0], state[1]]);
    stepsLeft -= 1;
  }
  for (let k = nTraj; k < samples; k++) {
    const x = [rng.uniform(-2.2, 2.2), rng.uniform(-2.2, 2.2)];
    xs.push(x);
    ys.push([...duffing.rk4Step(x)]);
  }
  return {
    X: pack(xs), Y: pack(ys), n: samples, dIn: 2, dOut: 2,
    regionLo: DUFFING_REGION.lo, regionHi: DUFFING_REGION.hi,
  };
}

export function cartpoleController(): { K: Mat; A: Mat; B: Mat } {
  const { A, B } = cp.discreteJacobians();
  const K = lqrGain(A, B, [5.0, 1.0, 20.0, 2.0], 0.05);
  return { K, A, B };
}

export function closedLoopStep(x: ArrayLike<number>, K: Mat): cp.State {
  const u = cp.saturate(-matVec(K, x)[0]);
  return cp.rk4Step(x, u);
}

export function cartpoleFeedforwardDataset(samples: number, seed: number): Dataset {
  const { K } = cartpoleController();
  const rng = new Rng(seed);
  const xs: number[][] = [];
  const ys: number[][] = [];
  const nTraj = Math.floor(samples * 0.5);
  let state: number[] = [0, 0, 0, 0];
  let stepsLeft = 0;
  for (let k = 0; k < nTraj; k++) {
    if (stepsLeft === 0) {
      state = [
        rng.uniform(1.6, 2.6), rng.uniform(0.6, 1.6),
        rng.uniform(-0.35, 0.1), rng.uniform(-1.4, -0.4),
      ];
      stepsLeft = 60;
    }
    xs.push([...state]);
    state = [...closedLoopStep(state, K)];
    ys.push([...state]);
    stepsLeft -= 1;
  }
  for (let k = nTraj; k < samples; k++) {
    const x = [
      rng.uniform(CARTPOLE_REGION.lo[0], CARTPOLE_REGION.hi[0]),
      rng.uniform(CARTPOLE_REGION.lo[1], CARTPOLE_REGION.hi[1]),
      rng.uniform(CARTPOLE_REGION.lo[2], CARTPOLE_REGION.hi[2]),
      rng.uniform(CARTPOLE_REGION.lo[3], CARTPOLE_REGION.hi[3]),
    ];
    xs.push(x);
    ys.push([...closedLoopStep(x, K)]);
  }
  return {
    X: pack(xs), Y: pack(ys), n: samples, dIn: 4, dOut: 4,
    regionLo: CARTPOLE_REGION.lo, regionHi: CARTPOLE_REGION.hi,
  };
}

export function policyDataset(samples: number, seed: number): Dataset {
  const { K } = cartpoleController();
  const rng = new Rng(seed);
  const xs: number[][] = [];
  const ys: number[][] = [];
  for (let k = 0; k < samples; k++) {
    const x = [
      rng.uniform(RESIDUAL_X_REGION.lo[0], RESIDUAL_X_REGION.hi[0]),
      rng.uniform(RESIDUAL_X_REGION.lo[1], RESIDUAL_X_REGION.hi[1]),
      rng.uniform(RESIDUAL_X_REGION.lo[2], RESIDUAL_X_REGION.hi[2]),
      rng.uniform(RESIDUAL_X_REGION.lo[3], RESIDUAL_X_REGION.hi[3]),
    ];
    xs.push(x);
    ys.push([cp.saturate(-matVec(K, x)[0])]);
  }
  return {
    X: pack(xs), Y: pack(ys), n: samples, dIn: 4, dOut: 1,
    regionLo: RESIDUAL_X_REGION.lo, regionHi: RESIDUAL_X_REGION.hi,
  };
}

/** Residual targets: one-step dynamics minus its linearisation at the
 * origin, sampled over state x command space. */
export function residualDataset(samples: number, seed: number): Dataset {
  const { A, B } = cartpoleController();
  const rng = new Rng(seed);
  const xs: number[][] = [];
  const ys: number[][] = [];
  for (let k = 0; k < samples; k++) {
    const x = [
      rng.uniform(RESIDUAL_X_REGION.lo[0], RESIDUAL_X_REGION.hi[0]),
      rng.uniform(RESIDUAL_X_REGION.lo[1], RESIDUAL_X_REGION.hi[1]),
      rng.uniform(RESIDUAL_X_REGION.lo[2], RESIDUAL_X_REGION.hi[2]),
      rng.uniform(RESIDUAL_X_REGION.lo[3], RESIDUAL_X_REGION.hi[3]),
    ];
    const u = rng.uniform(-RESIDUAL_U_RANGE, RESIDUAL_U_RANGE);
    const next = cp.rk4Step(x, u);
    const lin = matVec(A, x);
    const bu = matVec(B, [u]);
    xs.push([...x, u]);
    ys.push(next.map((v, i) => v - lin[i] - bu[i]));
  }
  return {
    X: pack(xs), Y: pack(ys), n: samples, dIn: 5, dOut: 4,
    regionLo: [...RESIDUAL_X_REGION.lo, -RESIDUAL_U_RANGE],
    regionHi: [...RESIDUAL_X_REGION.hi, RESIDUAL_U_RANGE],
  };
}

/** Debug dataset from the exact linearised map; an affine fit must recover
 * (A, B) to regression accuracy. */
export function linearDebugDataset(samples: number, seed: number): Dataset {
  const { A, B } = cartpoleController();
  const rng = new Rng(seed);
  const xs: number[][] = [];
  const ys: number[][] = [];
  for (let k = 0; k < samples; k++) {
    const x = [rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)];
    const u = rng.uniform(-1, 1);
    const lin = matVec(A, x);
    const bu = matVec(B, [u]);
    xs.push([...x, u]);
    ys.push(lin.map((v, i) => v + bu[i]));
  }
  return {
    X: pack(xs), Y: pack(ys), n: samples, dIn: 5, dOut: 4,
    regionLo: [-1, -1, -1, -1, -1], regionHi: [1, 1, 1, 1, 1],
  };
}
