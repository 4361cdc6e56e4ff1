// Planar oscillator with Rayleigh damping and a Duffing stiffness term,
// used as the small two-dimensional benchmark:
//   x1' = x2
//   x2' = mu (1 - x2^2) x2 - x1 - x1^3,  mu = 0.2
// discretized with one RK4 step of dt = 0.1.

export const MU = 0.2;
export const DT = 0.1;

export function deriv(x: ArrayLike<number>): [number, number] {
  const [p, v] = [x[0], x[1]];
  return [v, MU * (1 - v * v) * v - p - p * p * p];
}

export function rk4Step(x: ArrayLike<number>, dt: number = DT): [number, number] {
  const k1 = deriv(x);
  const k2 = deriv([x[0] + (dt / 2) * k1[0], x[1] + (dt / 2) * k1[1]]);
  const k3 = deriv([x[0] + (dt / 2) * k2[0], x[1] + (dt / 2) * k2[1]]);
  const k4 = deriv([x[0] + dt * k3[0], x[1] + dt * k3[1]]);
  return [
    x[0] + (dt / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
    x[1] + (dt / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
  ];
}
