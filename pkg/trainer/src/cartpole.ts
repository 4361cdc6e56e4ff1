// Frictionless cart-pole: cart 0.25 kg, pole 0.1 kg and 0.4 m long.
// State [position, cart velocity, pole angle, pole angular speed]; the
// angle is measured from the upright position.

import { Mat } from "./mat.js";

export const CART_MASS = 0.25;
export const POLE_MASS = 0.1;
export const POLE_LENGTH = 0.4; // full length; dynamics use the half length
export const GRAVITY = 9.8;
export const DT = 0.05;
export const FORCE_LIMIT = 10.0;

const HALF = POLE_LENGTH / 2;
const TOTAL = CART_MASS + POLE_MASS;

export type State = [number, number, number, number];

export function deriv(x: ArrayLike<number>, force: number): State {
  const [, v, theta, omega] = [x[0], x[1], x[2], x[3]];
  const sin = Math.sin(theta);
  const cos = Math.cos(theta);
  const temp = (force + POLE_MASS * HALF * omega * omega * sin) / TOTAL;
  const thetaAcc =
    (GRAVITY * sin - cos * temp) / (HALF * (4.0 / 3.0 - (POLE_MASS * cos * cos) / TOTAL));
  const xAcc = temp - (POLE_MASS * HALF * thetaAcc * cos) / TOTAL;
  return [v, xAcc, omega, thetaAcc];
}

export function rk4Step(x: ArrayLike<number>, force: number, dt: number = DT): State {
  const k1 = deriv(x, force);
  const x2 = add(x, k1, dt / 2);
  const k2 = deriv(x2, force);
  const x3 = add(x, k2, dt / 2);
  const k3 = deriv(x3, force);
  const x4 = add(x, k3, dt);
  const k4 = deriv(x4, force);
  const out: State = [0, 0, 0, 0];
  for (let i = 0; i < 4; i++) out[i] = x[i] + (dt / 6) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return out;
}

function add(x: ArrayLike<number>, d: State, h: number): State {
  return [x[0] + h * d[0], x[1] + h * d[1], x[2] + h * d[2], x[3] + h * d[3]];
}

/** Total mechanical energy of the unforced system (pole as a uniform rod,
 * angle measured from upright, so potential peaks at theta = 0). */
export function energy(x: ArrayLike<number>): number {
  const [, v, theta, omega] = [x[0], x[1], x[2], x[3]];
  const kinetic =
    0.5 * TOTAL * v * v +
    POLE_MASS * HALF * v * omega * Math.cos(theta) +
    0.5 * (4.0 / 3.0) * POLE_MASS * HALF * HALF * omega * omega;
  const potential = POLE_MASS * GRAVITY * HALF * Math.cos(theta);
  return kinetic + potential;
}

/** Jacobians of the discrete-time map (one RK4 step) at the origin,
 * computed by central differences. */
export function discreteJacobians(dt: number = DT, h = 1e-5): { A: Mat; B: Mat } {
  const A: Mat = [];
  for (let i = 0; i < 4; i++) A.push([0, 0, 0, 0]);
  for (let j = 0; j < 4; j++) {
    const plus: number[] = [0, 0, 0, 0];
    const minus: number[] = [0, 0, 0, 0];
    plus[j] = h;
    minus[j] = -h;
    const fp = rk4Step(plus, 0, dt);
    const fm = rk4Step(minus, 0, dt);
    for (let i = 0; i < 4; i++) A[i][j] = (fp[i] - fm[i]) / (2 * h);
  }
  const fp = rk4Step([0, 0, 0, 0], h, dt);
  const fm = rk4Step([0, 0, 0, 0], -h, dt);
  const B: Mat = [[0], [0], [0], [0]];
  for (let i = 0; i < 4; i++) B[i][0] = (fp[i] - fm[i]) / (2 * h);
  return { A, B };
}

export function saturate(u: number, limit: number = FORCE_LIMIT): number {
  return Math.min(limit, Math.max(-limit, u));
}
