/**
 * The training run: materialize, fit with early stopping on validation
 * loss, then report test-split predictions and measured hardware figures.
 */

import * as fs from "fs";

import * as tf from "@tensorflow/tfjs";

import { inferShapes, parseArchitecture } from "./arch";
import { Sample, loadDataset, parseSchema, stratifiedSplit } from "./dataset";
import { Model } from "./model";
import { Event, Prediction, Sink, TrainRequest, formatEvent } from "./protocol";
import { Rng } from "./rng";

const LEARNING_RATE = 1e-3;

export interface EpochStats {
  loss: number;
  acc: number;
}

/**
 * Early-stopping rule: stop once validation loss has failed to improve on
 * the best seen for `patience` consecutive epochs. Returns true when the
 * epoch at the end of `validLosses` exhausts the patience budget.
 */
export function shouldStop(validLosses: number[], patience: number): boolean {
  if (validLosses.length <= patience) return false;
  let best = Infinity;
  let sincebest = 0;
  for (const loss of validLosses) {
    if (loss < best) {
      best = loss;
      sincebest = 0;
    } else {
      sincebest++;
    }
  }
  return sincebest >= patience;
}

function batchTensor(samples: Sample[], indices: number[],
                     shape: { channels: number; height: number;
                              width: number }): tf.Tensor4D {
  const { channels, height, width } = shape;
  const data = new Float32Array(indices.length * height * width * channels);
  indices.forEach((idx, i) => {
    data.set(samples[idx].pixels, i * height * width * channels);
  });
  return tf.tensor4d(data, [indices.length, height, width, channels]);
}

function labelTensor(samples: Sample[], indices: number[],
                     numClasses: number): tf.Tensor2D {
  const labels = indices.map((i) => samples[i].label);
  return tf.oneHot(tf.tensor1d(labels, "int32"), numClasses) as tf.Tensor2D;
}

function* batches(indices: number[], size: number): Generator<number[]> {
  for (let at = 0; at < indices.length; at += size) {
    yield indices.slice(at, at + size);
  }
}

export class Trainer {
  private readonly samples: Sample[];
  private readonly model: Model;
  private readonly request: TrainRequest;
  private readonly split: { train: number[]; valid: number[]; test: number[] };
  private peakBytes = 0;

  constructor(request: TrainRequest) {
    this.request = request;
    const arch = parseArchitecture(request.architecture);
    inferShapes(arch);  // reject impossible stacks before touching data
    const schema = parseSchema(
      fs.readFileSync(request.dataset.schema, "utf-8"));
    this.samples = loadDataset(request.dataset.path, schema, arch.input);
    for (const s of this.samples) {
      if (s.label >= arch.numClasses) {
        throw new Error(
          `label ${s.label} of '${s.sampleId}' exceeds num_classes `
          + `${arch.numClasses}`);
      }
    }
    this.split = stratifiedSplit(this.samples, request.dataset.split,
                                 request.dataset.seed);
    this.model = new Model(arch, request.dataset.seed);
  }

  paramCount(): number {
    return this.model.paramCount();
  }

  private notePeak(): void {
    this.peakBytes = Math.max(this.peakBytes, tf.memory().numBytes);
  }

  /** Mean loss and accuracy over a whole split in eval mode. */
  evaluateSplit(indices: number[]): EpochStats {
    const arch = this.model.arch;
    let lossSum = 0;
    let correct = 0;
    for (const group of batches(indices, this.request.training.batch)) {
      const [loss, right] = tf.tidy(() => {
        const x = batchTensor(this.samples, group, arch.input);
        const y = labelTensor(this.samples, group, arch.numClasses);
        const logits = this.model.forward(x, false);
        const loss = tf.losses.softmaxCrossEntropy(y, logits);
        const hits = tf.sum(tf.cast(tf.equal(
          tf.argMax(logits, 1),
          tf.tensor1d(group.map((i) => this.samples[i].label), "int32")),
          "int32"));
        return [loss.dataSync()[0], hits.dataSync()[0]];
      });
      lossSum += loss * group.length;
      correct += right;
      this.notePeak();
    }
    return { loss: lossSum / indices.length, acc: correct / indices.length };
  }

  private trainOneEpoch(epoch: number, optimizer: tf.Optimizer): void {
    const arch = this.model.arch;
    const order = [...this.split.train];
    new Rng(this.request.dataset.seed * 7 + epoch).shuffle(order);
    let step = 0;
    for (const group of batches(order, this.request.training.batch)) {
      tf.tidy(() => {
        const x = batchTensor(this.samples, group, arch.input);
        const y = labelTensor(this.samples, group, arch.numClasses);
        optimizer.minimize(
          () => tf.losses.softmaxCrossEntropy(
            y, this.model.forward(x, true, epoch * 100003 + step)),
          false, this.model.trainableVariables());
      });
      step++;
      this.notePeak();
    }
  }

  predictions(): { preds: Prediction[]; latencyPerItem: number } {
    const arch = this.model.arch;
    const preds: Prediction[] = [];
    const started = process.hrtime.bigint();
    for (const group of batches(this.split.test,
                                this.request.training.batch)) {
      const labels = tf.tidy(() => {
        const x = batchTensor(this.samples, group, arch.input);
        return tf.argMax(this.model.forward(x, false), 1).dataSync();
      });
      group.forEach((idx, i) => {
        const s = this.samples[idx];
        preds.push({
          sample_id: s.sampleId,
          true_label: s.label,
          pred_label: labels[i],
          groups: s.groups,
        });
      });
      this.notePeak();
    }
    const elapsed = Number(process.hrtime.bigint() - started) / 1e9;
    return { preds, latencyPerItem: elapsed / this.split.test.length };
  }

  run(sink: Sink): void {
    const { maxEpochs, patience, batch } = this.request.training;
    const optimizer = tf.train.adam(LEARNING_RATE);
    const validLosses: number[] = [];
    let train: EpochStats = { loss: NaN, acc: NaN };
    let valid: EpochStats = { loss: NaN, acc: NaN };
    let epochs = 0;
    for (let epoch = 0; epoch < maxEpochs; epoch++) {
      this.trainOneEpoch(epoch, optimizer);
      epochs = epoch + 1;
      train = this.evaluateSplit(this.split.train);
      valid = this.evaluateSplit(this.split.valid);
      validLosses.push(valid.loss);
      sink(formatEvent({
        event: "epoch", epoch: epochs,
        train_loss: train.loss, valid_loss: valid.loss,
      }));
      if (shouldStop(validLosses, patience)) break;
    }
    const { preds, latencyPerItem } = this.predictions();
    const result: Event = {
      event: "result",
      train_loss: train.loss,
      train_acc: train.acc,
      valid_loss: valid.loss,
      valid_acc: valid.acc,
      epochs,
      predictions: preds,
      hardware: {
        latency_s_per_item: latencyPerItem,
        peak_memory_bytes: this.peakBytes,
      },
      hyperparameters: {
        optimizer: "adam",
        learning_rate: LEARNING_RATE,
        loss: "cross_entropy",
        batch,
      },
    };
    sink(formatEvent(result));
    optimizer.dispose();
  }

  dispose(): void {
    this.model.dispose();
  }
}
