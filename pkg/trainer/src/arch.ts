/**
 * Architecture documents.
 *
 * The trainer re-checks every document it receives instead of trusting the
 * caller: parsing, shape inference, and parameter counting are implemented
 * independently here and must agree with the search side exactly.
 */

export const NORM_KINDS = ["batch", "layer", "group", "none"] as const;
export const ACT_KINDS = ["relu", "gelu", "sigmoid", "tanh"] as const;
export const POOL_KINDS = ["max", "avg"] as const;

export type NormKind = (typeof NORM_KINDS)[number];
export type ActKind = (typeof ACT_KINDS)[number];
export type PoolKind = (typeof POOL_KINDS)[number];

export interface ShapeCHW {
  channels: number;
  height: number;
  width: number;
}

export type Layer =
  | { op: "conv2d"; outChannels: number; kernel: number; stride: number;
      padding: number; bias: boolean }
  | { op: "norm"; kind: NormKind; groups: number | null }
  | { op: "act"; kind: ActKind }
  | { op: "pool"; kind: PoolKind; size: number; stride: number }
  | { op: "global_pool" }
  | { op: "dropout"; p: number }
  | { op: "flatten" }
  | { op: "dense"; outFeatures: number; bias: boolean };

export interface Architecture {
  name: string;
  input: ShapeCHW;
  numClasses: number;
  layers: Layer[];
}

export class ArchError extends Error {}

export class ShapeError extends ArchError {
  constructor(public layerIndex: number, message: string) {
    super(`layer ${layerIndex}: ${message}`);
  }
}

function isObject(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function intField(obj: Record<string, unknown>, key: string, where: string,
                  minimum: number): number {
  const v = obj[key];
  if (typeof v !== "number" || !Number.isInteger(v)) {
    throw new ArchError(`${where}: field '${key}' must be an integer`);
  }
  if (v < minimum) {
    throw new ArchError(`${where}: field '${key}' must be >= ${minimum}`);
  }
  return v;
}

function boolField(obj: Record<string, unknown>, key: string,
                   where: string): boolean {
  const v = obj[key];
  if (typeof v !== "boolean") {
    throw new ArchError(`${where}: field '${key}' must be true or false`);
  }
  return v;
}

function choiceField<T extends string>(obj: Record<string, unknown>,
                                       key: string, where: string,
                                       allowed: readonly T[]): T {
  const v = obj[key];
  if (typeof v !== "string" || !allowed.includes(v as T)) {
    throw new ArchError(`${where}: field '${key}' must be one of ${allowed}`);
  }
  return v as T;
}

function parseLayer(raw: unknown, index: number): Layer {
  const where = `layers[${index}]`;
  if (!isObject(raw)) {
    throw new ArchError(`${where}: layer must be an object`);
  }
  switch (raw.op) {
    case "conv2d":
      return {
        op: "conv2d",
        outChannels: intField(raw, "out_channels", where, 1),
        kernel: intField(raw, "kernel", where, 1),
        stride: intField(raw, "stride", where, 1),
        padding: intField(raw, "padding", where, 0),
        bias: boolField(raw, "bias", where),
      };
    case "norm":
      return {
        op: "norm",
        kind: choiceField(raw, "kind", where, NORM_KINDS),
        groups: "groups" in raw ? intField(raw, "groups", where, 1) : null,
      };
    case "act":
      return { op: "act", kind: choiceField(raw, "kind", where, ACT_KINDS) };
    case "pool":
      return {
        op: "pool",
        kind: choiceField(raw, "kind", where, POOL_KINDS),
        size: intField(raw, "size", where, 1),
        stride: intField(raw, "stride", where, 1),
      };
    case "global_pool":
      choiceField(raw, "kind", where, ["avg"] as const);
      return { op: "global_pool" };
    case "dropout": {
      const p = raw.p;
      if (typeof p !== "number" || !(p >= 0 && p < 1)) {
        throw new ArchError(`${where}: field 'p' must be in [0, 1)`);
      }
      return { op: "dropout", p };
    }
    case "flatten":
      return { op: "flatten" };
    case "dense":
      return {
        op: "dense",
        outFeatures: intField(raw, "out_features", where, 1),
        bias: boolField(raw, "bias", where),
      };
    default:
      throw new ArchError(`${where}: unknown layer op '${raw.op}'`);
  }
}

export function parseArchitecture(doc: unknown): Architecture {
  if (!isObject(doc)) {
    throw new ArchError("architecture must be an object");
  }
  const name = doc.name;
  if (typeof name !== "string" || name.length === 0) {
    throw new ArchError("field 'name' must be a nonempty string");
  }
  if (!isObject(doc.input)) {
    throw new ArchError("field 'input' must be an object");
  }
  const input: ShapeCHW = {
    channels: intField(doc.input, "channels", "input", 1),
    height: intField(doc.input, "height", "input", 1),
    width: intField(doc.input, "width", "input", 1),
  };
  const numClasses = intField(doc, "num_classes", "architecture", 1);
  if (!Array.isArray(doc.layers) || doc.layers.length === 0) {
    throw new ArchError("field 'layers' must be a nonempty array");
  }
  const layers = doc.layers.map(parseLayer);
  return { name, input, numClasses, layers };
}

function convOut(extent: number, kernel: number, stride: number,
                 padding: number): number {
  return Math.floor((extent + 2 * padding - kernel) / stride) + 1;
}

/**
 * Output shape after each layer. Throws ShapeError at the first layer whose
 * output is impossible, with the same verdicts the search side produces:
 * spatial dims below 1, spatial ops after flatten, dense before flatten,
 * group counts that do not divide the channels, or a final vector that is
 * not num_classes long.
 */
export function inferShapes(arch: Architecture): ShapeCHW[] {
  let shape = arch.input;
  let flat = false;
  const out: ShapeCHW[] = [];
  arch.layers.forEach((layer, i) => {
    switch (layer.op) {
      case "conv2d": {
        if (flat) throw new ShapeError(i, "conv2d cannot follow flatten");
        const h = convOut(shape.height, layer.kernel, layer.stride,
                          layer.padding);
        const w = convOut(shape.width, layer.kernel, layer.stride,
                          layer.padding);
        if (h < 1 || w < 1) {
          throw new ShapeError(i, `conv2d output spatial dims ${h}x${w} fall below 1`);
        }
        shape = { channels: layer.outChannels, height: h, width: w };
        break;
      }
      case "pool": {
        if (flat) throw new ShapeError(i, "pool cannot follow flatten");
        const h = convOut(shape.height, layer.size, layer.stride, 0);
        const w = convOut(shape.width, layer.size, layer.stride, 0);
        if (h < 1 || w < 1) {
          throw new ShapeError(i, `pool output spatial dims ${h}x${w} fall below 1`);
        }
        shape = { channels: shape.channels, height: h, width: w };
        break;
      }
      case "global_pool":
        if (flat) throw new ShapeError(i, "global_pool cannot follow flatten");
        shape = { channels: shape.channels, height: 1, width: 1 };
        break;
      case "norm":
        if (layer.kind === "group") {
          if (layer.groups === null) {
            throw new ShapeError(i, "group norm requires 'groups'");
          }
          if (shape.channels % layer.groups !== 0) {
            throw new ShapeError(
              i,
              `group norm groups=${layer.groups} does not divide channels=${shape.channels}`,
            );
          }
        }
        break;
      case "act":
      case "dropout":
        break;
      case "flatten":
        shape = {
          channels: shape.channels * shape.height * shape.width,
          height: 1,
          width: 1,
        };
        flat = true;
        break;
      case "dense":
        if (!flat) {
          throw new ShapeError(i, "dense requires a flat vector input (flatten first)");
        }
        shape = { channels: layer.outFeatures, height: 1, width: 1 };
        break;
    }
    out.push(shape);
  });
  const last = arch.layers.length - 1;
  if (!flat) {
    throw new ShapeError(last, "final output must be a flat vector (missing flatten)");
  }
  if (shape.channels !== arch.numClasses) {
    throw new ShapeError(
      last,
      `final vector length ${shape.channels} != num_classes ${arch.numClasses}`,
    );
  }
  return out;
}

/** Trainable parameter count; must equal the search side's static count. */
export function countParams(arch: Architecture): number {
  const shapes = inferShapes(arch);
  let total = 0;
  let channels = arch.input.channels;
  arch.layers.forEach((layer, i) => {
    switch (layer.op) {
      case "conv2d":
        total += layer.kernel * layer.kernel * channels * layer.outChannels;
        if (layer.bias) total += layer.outChannels;
        break;
      case "norm":
        if (layer.kind !== "none") total += 2 * channels;
        break;
      case "dense":
        total += channels * layer.outFeatures;
        if (layer.bias) total += layer.outFeatures;
        break;
      default:
        break;
    }
    channels = shapes[i].channels;
  });
  return total;
}
