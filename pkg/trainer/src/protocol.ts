/**
 * The wire protocol: one JSON request on standard input, line-delimited
 * JSON events on standard output.
 */

export class ProtocolError extends Error {}

export interface TrainRequest {
  architecture: unknown;
  dataset: { path: string; schema: string; split: number[]; seed: number };
  training: { maxEpochs: number; patience: number; batch: number };
}

export interface Prediction {
  sample_id: string;
  true_label: number;
  pred_label: number;
  groups: Record<string, string>;
}

export type Event =
  | { event: "epoch"; epoch: number; train_loss: number; valid_loss: number }
  | { event: "result"; train_loss: number; train_acc: number;
      valid_loss: number; valid_acc: number; epochs: number;
      predictions: Prediction[];
      hardware: { latency_s_per_item: number; peak_memory_bytes: number };
      hyperparameters: Record<string, unknown> }
  | { event: "error"; message: string };

function field(obj: unknown, key: string, where: string): unknown {
  if (typeof obj !== "object" || obj === null
      || !(key in (obj as Record<string, unknown>))) {
    throw new ProtocolError(`request ${where} is missing '${key}'`);
  }
  return (obj as Record<string, unknown>)[key];
}

function numberField(obj: unknown, key: string, where: string): number {
  const v = field(obj, key, where);
  if (typeof v !== "number") {
    throw new ProtocolError(`request ${where}.${key} must be a number`);
  }
  return v;
}

function stringField(obj: unknown, key: string, where: string): string {
  const v = field(obj, key, where);
  if (typeof v !== "string") {
    throw new ProtocolError(`request ${where}.${key} must be a string`);
  }
  return v;
}

export function parseRequest(text: string): TrainRequest {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new ProtocolError(`request is not valid JSON: ${(e as Error).message}`);
  }
  const architecture = field(doc, "architecture", "body");
  const dataset = field(doc, "dataset", "body");
  const training = field(doc, "training", "body");
  const split = field(dataset, "split", "dataset");
  if (!Array.isArray(split) || split.some((r) => typeof r !== "number")) {
    throw new ProtocolError("request dataset.split must be a number array");
  }
  return {
    architecture,
    dataset: {
      path: stringField(dataset, "path", "dataset"),
      schema: stringField(dataset, "schema", "dataset"),
      split: split as number[],
      seed: numberField(dataset, "seed", "dataset"),
    },
    training: {
      maxEpochs: numberField(training, "max_epochs", "training"),
      patience: numberField(training, "patience", "training"),
      batch: numberField(training, "batch", "training"),
    },
  };
}

export function formatEvent(event: Event): string {
  return JSON.stringify(event) + "\n";
}

export type Sink = (line: string) => void;

export const stdoutSink: Sink = (line) => {
  process.stdout.write(line);
};
