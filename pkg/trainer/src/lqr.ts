// Discrete-time LQR via fixed-point iteration of the Riccati recursion.
// The resulting saturated state feedback stands in for the model-predictive
// controller when generating closed-loop training data.

import { Mat, eye, matAdd, matMul, matSub, matT, maxAbsDiff, solve } from "./mat.js";

export interface LqrResult {
  K: Mat; // u = -K x
  P: Mat;
  iterations: number;
}

export function dare(A: Mat, B: Mat, Q: Mat, R: Mat, tol = 1e-12, maxIter = 10_000): LqrResult {
  const At = matT(A);
  const Bt = matT(B);
  let P = Q.map((row) => [...row]);
  for (let it = 1; it <= maxIter; it++) {
    const PA = matMul(P, A);
    const PB = matMul(P, B);
    const G = matAdd(R, matMul(Bt, PB)); // R + B'PB
    const K = solve(G, matMul(Bt, PA)); // (R + B'PB)^-1 B'PA
    const next = matAdd(Q, matSub(matMul(At, PA), matMul(matMul(At, PB), K)));
    if (maxAbsDiff(next, P) < tol) {
      return { K, P: next, iterations: it };
    }
    P = next;
  }
  throw new Error("Riccati iteration did not converge");
}

export function lqrGain(A: Mat, B: Mat, qDiag: number[], r: number): Mat {
  const n = A.length;
  const Q = eye(n);
  for (let i = 0; i < n; i++) Q[i][i] = qDiag[i];
  return dare(A, B, Q, [[r]]).K;
}
