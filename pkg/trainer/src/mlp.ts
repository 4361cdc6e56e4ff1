// Minimal fully-connected network with Adam training, written against flat
// Float64Arrays so the biggest fixture (4-100-100-4) trains in minutes.

import { solve } from "./mat.js";
import { Rng } from "./rng.js";

export type Activation = "relu" | "tanh";

export interface Mlp {
  sizes: number[]; // [d_in, hidden..., d_out]
  act: Activation;
  W: Float64Array[]; // W[l] has shape sizes[l+1] x sizes[l], row-major
  b: Float64Array[];
}

export function initMlp(sizes: number[], act: Activation, rng: Rng): Mlp {
  const W: Float64Array[] = [];
  const b: Float64Array[] = [];
  for (let l = 0; l < sizes.length - 1; l++) {
    const fanIn = sizes[l];
    const fanOut = sizes[l + 1];
    const scale = Math.sqrt(act === "relu" ? 2.0 / fanIn : 1.0 / fanIn);
    const w = new Float64Array(fanOut * fanIn);
    for (let i = 0; i < w.length; i++) w[i] = rng.normal() * scale;
    W.push(w);
    b.push(new Float64Array(fanOut));
  }
  return { sizes, act, W, b };
}

function actFn(act: Activation, v: number): number {
  return act === "relu" ? (v > 0 ? v : 0) : Math.tanh(v);
}

function actGrad(act: Activation, pre: number, post: number): number {
  return act === "relu" ? (pre > 0 ? 1 : 0) : 1 - post * post;
}

/** Forward pass for one sample; optionally records per-layer values. */
export function forward(net: Mlp, x: ArrayLike<number>, cache?: Float64Array[]): Float64Array {
  const L = net.W.length;
  let cur = Float64Array.from(x as ArrayLike<number>);
  if (cache) cache[0] = cur;
  for (let l = 0; l < L; l++) {
    const rows = net.sizes[l + 1];
    const cols = net.sizes[l];
    const W = net.W[l];
    const b = net.b[l];
    const out = new Float64Array(rows);
    for (let i = 0; i < rows; i++) {
      let s = b[i];
      const off = i * cols;
      for (let j = 0; j < cols; j++) s += W[off + j] * cur[j];
      out[i] = s;
    }
    if (l < L - 1) {
      if (cache) cache[2 * l + 1] = out.slice();
      for (let i = 0; i < rows; i++) out[i] = actFn(net.act, out[i]);
    }
    cur = out;
    if (cache) cache[2 * l + 2] = cur;
  }
  return cur;
}

export function forwardBatch(net: Mlp, X: Float64Array, n: number): Float64Array {
  const dIn = net.sizes[0];
  const dOut = net.sizes[net.sizes.length - 1];
  const out = new Float64Array(n * dOut);
  for (let k = 0; k < n; k++) {
    const y = forward(net, X.subarray(k * dIn, (k + 1) * dIn));
    out.set(y, k * dOut);
  }
  return out;
}

export interface TrainOptions {
  epochs: number;
  batch: number;
  lr: number;
  seed: number;
  lrDecay?: number; // multiplicative per epoch
  verbose?: boolean;
}

/** Mean-squared-error Adam training; returns the final training loss. */
export function trainAdam(net: Mlp, X: Float64Array, Y: Float64Array, n: number, opts: TrainOptions): number {
  const L = net.W.length;
  const dIn = net.sizes[0];
  const dOut = net.sizes[net.sizes.length - 1];
  const rng = new Rng(opts.seed);
  const beta1 = 0.9;
  const beta2 = 0.999;
  const eps = 1e-8;

  const mW = net.W.map((w) => new Float64Array(w.length));
  const vW = net.W.map((w) => new Float64Array(w.length));
  const mB = net.b.map((b) => new Float64Array(b.length));
  const vB = net.b.map((b) => new Float64Array(b.length));
  const gW = net.W.map((w) => new Float64Array(w.length));
  const gB = net.b.map((b) => new Float64Array(b.length));

  let lr = opts.lr;
  let step = 0;
  let lastLoss = NaN;
  const cache: Float64Array[] = new Array(2 * L + 1);

  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    const perm = rng.permutation(n);
    let epochLoss = 0;
    for (let start = 0; start < n; start += opts.batch) {
      const end = Math.min(start + opts.batch, n);
      const bs = end - start;
      for (const g of gW) g.fill(0);
      for (const g of gB) g.fill(0);

      for (let kk = start; kk < end; kk++) {
        const k = perm[kk];
        const x = X.subarray(k * dIn, (k + 1) * dIn);
        const y = Y.subarray(k * dOut, (k + 1) * dOut);
        const pred = forward(net, x, cache);

        let delta = new Float64Array(dOut);
        for (let i = 0; i < dOut; i++) {
          const e = pred[i] - y[i];
          delta[i] = (2 * e) / (dOut * bs);
          epochLoss += (e * e) / dOut;
        }
        for (let l = L - 1; l >= 0; l--) {
          const rows = net.sizes[l + 1];
          const cols = net.sizes[l];
          const below = cache[2 * l] as Float64Array; // post-activation of layer l-1 / input
          const gw = gW[l];
          const gb = gB[l];
          for (let i = 0; i < rows; i++) {
            const d = delta[i];
            if (d !== 0) {
              const off = i * cols;
              for (let j = 0; j < cols; j++) gw[off + j] += d * below[j];
              gb[i] += d;
            }
          }
          if (l > 0) {
            const W = net.W[l];
            const pre = cache[2 * (l - 1) + 1] as Float64Array;
            const post = below;
            const next = new Float64Array(cols);
            for (let i = 0; i < rows; i++) {
              const d = delta[i];
              if (d === 0) continue;
              const off = i * cols;
              for (let j = 0; j < cols; j++) next[j] += d * W[off + j];
            }
            for (let j = 0; j < cols; j++) next[j] *= actGrad(net.act, pre[j], post[j]);
            delta = next;
          }
        }
      }

      step += 1;
      const c1 = 1 - Math.pow(beta1, step);
      const c2 = 1 - Math.pow(beta2, step);
      for (let l = 0; l < L; l++) {
        adamUpdate(net.W[l], gW[l], mW[l], vW[l], lr, beta1, beta2, eps, c1, c2);
        adamUpdate(net.b[l], gB[l], mB[l], vB[l], lr, beta1, beta2, eps, c1, c2);
      }
    }
    lastLoss = epochLoss / n;
    lr *= opts.lrDecay ?? 1.0;
    if (opts.verbose && (epoch % 5 === 0 || epoch === opts.epochs - 1)) {
      console.log(`  epoch ${epoch + 1}/${opts.epochs} mse=${lastLoss.toExponential(3)}`);
    }
  }
  return lastLoss;
}

function adamUpdate(
  p: Float64Array, g: Float64Array, m: Float64Array, v: Float64Array,
  lr: number, b1: number, b2: number, eps: number, c1: number, c2: number,
) {
  for (let i = 0; i < p.length; i++) {
    m[i] = b1 * m[i] + (1 - b1) * g[i];
    v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
    p[i] -= (lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + eps);
  }
}

/** Relative root-mean-square error: ||pred - y||_rms / ||y||_rms. */
export function relativeRms(net: Mlp, X: Float64Array, Y: Float64Array, n: number): number {
  const dOut = net.sizes[net.sizes.length - 1];
  const pred = forwardBatch(net, X, n);
  let errSq = 0;
  let refSq = 0;
  for (let i = 0; i < n * dOut; i++) {
    const e = pred[i] - Y[i];
    errSq += e * e;
    refSq += Y[i] * Y[i];
  }
  return Math.sqrt(errSq / Math.max(refSq, 1e-300));
}

/** Exact least-squares fit for a purely affine model (no hidden layers). */
export function fitAffineExact(X: Float64Array, Y: Float64Array, n: number, dIn: number, dOut: number): Mlp {
  // normal equations on [X 1]
  const d = dIn + 1;
  const G: number[][] = Array.from({ length: d }, () => new Array(d).fill(0));
  const R: number[][] = Array.from({ length: d }, () => new Array(dOut).fill(0));
  for (let k = 0; k < n; k++) {
    const x = X.subarray(k * dIn, (k + 1) * dIn);
    for (let i = 0; i < d; i++) {
      const xi = i < dIn ? x[i] : 1;
      for (let j = i; j < d; j++) {
        G[i][j] += xi * (j < dIn ? x[j] : 1);
      }
      for (let o = 0; o < dOut; o++) R[i][o] += xi * Y[k * dOut + o];
    }
  }
  for (let i = 0; i < d; i++) for (let j = 0; j < i; j++) G[i][j] = G[j][i];
  const theta = solve(G, R);
  const W = new Float64Array(dOut * dIn);
  const b = new Float64Array(dOut);
  for (let o = 0; o < dOut; o++) {
    for (let j = 0; j < dIn; j++) W[o * dIn + j] = theta[j][o];
    b[o] = theta[dIn][o];
  }
  return { sizes: [dIn, dOut], act: "relu", W: [W], b: [b] };
}
