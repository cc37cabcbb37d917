import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { afterAll, describe, expect, it } from "vitest";

import { parseSchema } from "../src/dataset";
import { TrainRequest } from "../src/protocol";
import { Trainer, shouldStop } from "../src/train";
import { writeSynthDataset } from "../src/synth";

const SCHEMA = parseSchema(JSON.stringify({
  attributes: [
    { name: "gender", groups: ["male", "female"] },
    { name: "age", groups: ["young", "middle", "old"] },
  ],
}));

const tmpRoots: string[] = [];

afterAll(() => {
  for (const dir of tmpRoots) fs.rmSync(dir, { recursive: true, force: true });
});

function synthRequest(maxEpochs: number, seed = 3): TrainRequest {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "fairarch-train-"));
  tmpRoots.push(dir);
  writeSynthDataset({
    dir, count: 160, numClasses: 2, height: 6, width: 6, seed: 7,
    schema: SCHEMA, numericAgeAttr: "age",
  });
  return {
    architecture: {
      name: "toy",
      input: { channels: 3, height: 6, width: 6 },
      num_classes: 2,
      layers: [
        { op: "conv2d", out_channels: 4, kernel: 3, stride: 1, padding: 1,
          bias: true },
        { op: "act", kind: "relu" },
        { op: "global_pool", kind: "avg" },
        { op: "flatten" },
        { op: "dense", out_features: 2, bias: true },
      ],
    },
    dataset: { path: dir, schema: path.join(dir, "schema.json"),
               split: [0.7, 0.2, 0.1], seed },
    training: { maxEpochs, patience: 3, batch: 16 },
  };
}

function runToLines(request: TrainRequest): string[] {
  const lines: string[] = [];
  const trainer = new Trainer(request);
  try {
    trainer.run((l) => lines.push(l));
  } finally {
    trainer.dispose();
  }
  return lines;
}

describe("early stopping rule", () => {
  it("never fires while the loss still improves", () => {
    expect(shouldStop([1.0, 0.9, 0.8, 0.7], 3)).toBe(false);
  });

  it("fires exactly patience epochs after the plateau onset", () => {
    const plateau = [1.0, 0.9, 0.85];
    for (let extra = 1; extra <= 4; extra++) {
      const losses = [...plateau, ...Array(extra).fill(0.85)];
      expect(shouldStop(losses, 3)).toBe(extra >= 3);
    }
  });

  it("treats matching the best as no improvement", () => {
    expect(shouldStop([0.5, 0.5, 0.5, 0.5], 3)).toBe(true);
  });

  it("recovers when a late epoch improves again", () => {
    expect(shouldStop([1.0, 0.9, 0.95, 0.93, 0.85], 3)).toBe(false);
  });
});

describe("training on the separable synthetic set", () => {
  it("fits, streams protocol events, and predicts the whole test split",
     { timeout: 120_000 }, () => {
    const request = synthRequest(15);
    const lines = runToLines(request);

    const events = lines.map((l) => JSON.parse(l));
    for (const e of events) {
      expect(["epoch", "result", "error"]).toContain(e.event);
    }
    expect(events.at(-1)?.event).toBe("result");

    const epochs = events.filter((e) => e.event === "epoch");
    expect(epochs.length).toBeGreaterThan(0);
    expect(epochs.length).toBeLessThanOrEqual(15);
    epochs.forEach((e, i) => {
      expect(e.epoch).toBe(i + 1);
      expect(e.train_loss).toBeTypeOf("number");
      expect(e.valid_loss).toBeTypeOf("number");
    });

    const result = events.at(-1);
    expect(result.valid_acc).toBeGreaterThan(0.9);
    expect(result.train_acc).toBeGreaterThan(0.9);
    expect(result.epochs).toBe(epochs.length);
    expect(result.hardware.latency_s_per_item).toBeGreaterThan(0);
    expect(result.hardware.peak_memory_bytes).toBeGreaterThan(0);
    expect(result.hyperparameters.optimizer).toBe("adam");

    // predictions cover the 10% test split exactly once, with groups
    const ids = result.predictions.map((p: { sample_id: string }) => p.sample_id);
    expect(new Set(ids).size).toBe(ids.length);
    expect(ids.length).toBeGreaterThanOrEqual(16);
    for (const p of result.predictions) {
      expect(["male", "female"]).toContain(p.groups.gender);
      expect(["young", "middle", "old"]).toContain(p.groups.age);
      expect([0, 1]).toContain(p.true_label);
      expect([0, 1]).toContain(p.pred_label);
    }
  });

  it("reproduces the identical prediction list for the same request",
     { timeout: 120_000 }, () => {
    const request = synthRequest(3);
    const a = runToLines(request).at(-1) as string;
    const b = runToLines(request).at(-1) as string;
    const predsA = JSON.parse(a).predictions;
    const predsB = JSON.parse(b).predictions;
    expect(predsA).toEqual(predsB);
  });

  it("materializes the analyzer's parameter count", () => {
    const request = synthRequest(1);
    const trainer = new Trainer(request);
    // conv 3*3*3*4+4 = 112, dense 4*2+2 = 10
    expect(trainer.paramCount()).toBe(122);
    trainer.dispose();
  });
});
