import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { describe, expect, it } from "vitest";

import { cartpoleController } from "../src/dataset.js";
import { forward } from "../src/mlp.js";
import { mlpToNetwork } from "../src/netjson.js";
import { FIT_TARGET, runSpec } from "../src/train.js";

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "nnreach-trainer-"));
}

function nnreachAvailable(): boolean {
  try {
    execFileSync("nnreach", ["--version"], { stdio: "pipe" });
    return true;
  } catch {
    return false;
  }
}

describe("fit and export", () => {
  it("debug linear fixture recovers the linearised dynamics exactly", () => {
    const out = tmpdir();
    const result = runSpec({ system: "linear-debug", out, seed: 3 });
    expect(result.nets.linear_debug.heldout_rel_rms).toBeLessThan(1e-9);
    const doc = JSON.parse(fs.readFileSync(path.join(out, "linear_debug.json"), "utf-8"));
    const { A, B } = cartpoleController();
    const affine = doc.nodes.find((n: { op: string }) => n.op === "affine");
    for (let i = 0; i < 4; i++) {
      for (let j = 0; j < 4; j++) expect(Math.abs(affine.W[i][j] - A[i][j])).toBeLessThan(1e-6);
      expect(Math.abs(affine.W[i][4] - B[i][0])).toBeLessThan(1e-6);
      expect(Math.abs(affine.b[i])).toBeLessThan(1e-6);
    }
  }, 30_000);

  it("trains the small oscillator fixture to the fit target", () => {
    const out = tmpdir();
    const result = runSpec({
      system: "rayleigh-duffing", out, seed: 7,
      samples: 8000, epochs: 60, shape: [2, 20, 20, 2],
    });
    expect(result.nets.rayleigh_duffing.heldout_rel_rms).toBeLessThanOrEqual(FIT_TARGET);
    const probe = JSON.parse(
      fs.readFileSync(path.join(out, "rayleigh_duffing_probe.json"), "utf-8"),
    );
    expect(probe.inputs.length).toBe(1000);
    expect(probe.outputs[0].length).toBe(2);
  }, 240_000);

  it("export document declares the right shapes and round-trips floats", () => {
    const out = tmpdir();
    runSpec({ system: "linear-debug", out, seed: 3 });
    const doc = JSON.parse(fs.readFileSync(path.join(out, "linear_debug.json"), "utf-8"));
    expect(doc.inputs).toEqual([0]);
    expect(doc.state_dim).toBe(5);
    expect(doc.disturbance_dim).toBe(0);
    const again = JSON.parse(JSON.stringify(doc));
    expect(again).toEqual(doc); // shortest round-trip decimals are stable
  }, 30_000);

  it("exports validate under the verification CLI when it is installed", () => {
    if (!nnreachAvailable()) return;
    const out = tmpdir();
    runSpec({ system: "linear-debug", out, seed: 3 });
    const report = execFileSync(
      "nnreach", ["validate", path.join(out, "linear_debug.json")],
      { encoding: "utf-8" },
    );
    expect(report).toContain("ok:");
  }, 30_000);

  it("probe outputs agree with a fresh forward pass", () => {
    const out = tmpdir();
    runSpec({ system: "linear-debug", out, seed: 3 });
    const doc = JSON.parse(fs.readFileSync(path.join(out, "linear_debug.json"), "utf-8"));
    const probe = JSON.parse(fs.readFileSync(path.join(out, "linear_debug_probe.json"), "utf-8"));
    const affine = doc.nodes.find((n: { op: string }) => n.op === "affine");
    for (let k = 0; k < 5; k++) {
      const x: number[] = probe.inputs[k];
      for (let i = 0; i < 4; i++) {
        const y = affine.W[i].reduce((s: number, v: number, j: number) => s + v * x[j], 0) + affine.b[i];
        expect(y).toBeCloseTo(probe.outputs[k][i], 12);
      }
    }
  }, 30_000);
});
