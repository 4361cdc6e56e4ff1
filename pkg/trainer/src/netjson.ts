// Export trained networks in the verification toolkit's graph JSON format:
// a DAG of input/affine/relu/tanh/add/concat nodes with dense ids.
// JSON.stringify emits shortest round-trip decimals for doubles, so the
// weights reload bit-exactly.

import { Mlp, forward } from "./mlp.js";
import { Rng } from "./rng.js";

export interface NetworkNode {
  id: number;
  op: "input" | "affine" | "relu" | "tanh" | "add" | "concat";
  dim: number;
  inputs: number[];
  W?: number[][];
  b?: number[];
}

export interface NetworkDoc {
  inputs: number[];
  output: number;
  state_dim: number;
  disturbance_dim: number;
  nodes: NetworkNode[];
}

export function mlpToNetwork(net: Mlp, stateDim: number, disturbanceDim: number): NetworkDoc {
  const nodes: NetworkNode[] = [{ id: 0, op: "input", dim: net.sizes[0], inputs: [] }];
  let prev = 0;
  const L = net.W.length;
  for (let l = 0; l < L; l++) {
    const rows = net.sizes[l + 1];
    const cols = net.sizes[l];
    const W: number[][] = [];
    for (let i = 0; i < rows; i++) {
      W.push(Array.from(net.W[l].subarray(i * cols, (i + 1) * cols)));
    }
    const id = nodes.length;
    nodes.push({ id, op: "affine", dim: rows, inputs: [prev], W, b: Array.from(net.b[l]) });
    prev = id;
    if (l < L - 1) {
      const aid = nodes.length;
      nodes.push({ id: aid, op: net.act, dim: rows, inputs: [prev] });
      prev = aid;
    }
  }
  return {
    inputs: [0],
    output: prev,
    state_dim: stateDim,
    disturbance_dim: disturbanceDim,
    nodes,
  };
}

export interface Probe {
  inputs: number[][];
  outputs: number[][];
}

/** Reference input/output pairs for cross-implementation agreement checks. */
export function makeProbe(net: Mlp, lo: number[], hi: number[], count: number, seed: number): Probe {
  const rng = new Rng(seed);
  const inputs: number[][] = [];
  const outputs: number[][] = [];
  for (let k = 0; k < count; k++) {
    const x = rng.uniformVec(lo, hi);
    inputs.push(Array.from(x));
    outputs.push(Array.from(forward(net, x)));
  }
  return { inputs, outputs };
}
