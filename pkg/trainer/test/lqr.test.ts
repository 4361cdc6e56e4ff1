import { describe, expect, it } from "vitest";

import { discreteJacobians } from "../src/cartpole.js";
import { cartpoleController, closedLoopStep } from "../src/dataset.js";
import { dare } from "../src/lqr.js";
import { eye, matAdd, matMul, matSub, matT, maxAbsDiff, solve } from "../src/mat.js";

describe("Riccati / LQR design", () => {
  it("returns a fixed point of the Riccati recursion", () => {
    const { A, B } = discreteJacobians();
    const Q = eye(4);
    const R = [[0.1]];
    const { P } = dare(A, B, Q, R);
    const At = matT(A);
    const Bt = matT(B);
    const PA = matMul(P, A);
    const PB = matMul(P, B);
    const K = solve(matAdd(R, matMul(Bt, PB)), matMul(Bt, PA));
    const next = matAdd(Q, matSub(matMul(At, PA), matMul(matMul(At, PB), K)));
    expect(maxAbsDiff(next, P)).toBeLessThan(1e-9);
  });

  it("stabilises the nonlinear cart-pole from a tilted start", () => {
    const { K } = cartpoleController();
    let x: ArrayLike<number> = [0.3, 0.0, 0.25, -0.1];
    for (let k = 0; k < 300; k++) x = closedLoopStep(x, K);
    const norm = Math.hypot(x[0], x[1], x[2], x[3]);
    expect(norm).toBeLessThan(1e-3);
  });

  it("stabilises from the verification initial region", () => {
    // worst corner of the benchmark initial set
    const { K } = cartpoleController();
    let x: ArrayLike<number> = [2.2, 1.2, -0.174, -1.0];
    for (let k = 0; k < 400; k++) x = closedLoopStep(x, K);
    expect(Math.hypot(x[0], x[1], x[2], x[3])).toBeLessThan(1e-2);
  });
});
