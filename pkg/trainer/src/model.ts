/**
 * Materializing an architecture into trainable tensors.
 *
 * The model is a flat list of variables plus a forward function, rather than
 * a tf.LayersModel: the variable set must match the search side's parameter
 * count exactly, and stock layers carry extra state (moving averages) that
 * would break that parity.
 */

import * as tf from "@tensorflow/tfjs";

import { Architecture, Layer, inferShapes } from "./arch";
import { Rng } from "./rng";

const NORM_EPSILON = 1e-5;

interface LayerVars {
  kernel?: tf.Variable;
  bias?: tf.Variable;
  gamma?: tf.Variable;
  beta?: tf.Variable;
}

function seededTensor(shape: number[], std: number, rng: Rng): tf.Tensor {
  const n = shape.reduce((a, b) => a * b, 1);
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    data[i] = rng.gauss() * std;
  }
  return tf.tensor(data, shape);
}

/** Statistics-based normalization over the given axes with a scale and
 * shift; covers batch, layer, and group kinds. */
function normalize(x: tf.Tensor, axes: number[], gamma: tf.Tensor,
                   beta: tf.Tensor): tf.Tensor {
  const { mean, variance } = tf.moments(x, axes, true);
  const centered = tf.div(tf.sub(x, mean),
                          tf.sqrt(tf.add(variance, NORM_EPSILON)));
  return tf.add(tf.mul(centered, gamma), beta);
}

export class Model {
  readonly arch: Architecture;
  private readonly vars: LayerVars[];
  private readonly inChannels: number[];

  constructor(arch: Architecture, seed: number) {
    this.arch = arch;
    const shapes = inferShapes(arch);
    const rng = new Rng(seed);
    this.vars = [];
    this.inChannels = [];
    let channels = arch.input.channels;
    arch.layers.forEach((layer, i) => {
      const v: LayerVars = {};
      if (layer.op === "conv2d") {
        const fanIn = layer.kernel * layer.kernel * channels;
        v.kernel = tf.variable(seededTensor(
          [layer.kernel, layer.kernel, channels, layer.outChannels],
          Math.sqrt(2 / fanIn), rng));
        if (layer.bias) v.bias = tf.variable(tf.zeros([layer.outChannels]));
      } else if (layer.op === "dense") {
        v.kernel = tf.variable(seededTensor(
          [channels, layer.outFeatures], Math.sqrt(2 / channels), rng));
        if (layer.bias) v.bias = tf.variable(tf.zeros([layer.outFeatures]));
      } else if (layer.op === "norm" && layer.kind !== "none") {
        v.gamma = tf.variable(tf.ones([channels]));
        v.beta = tf.variable(tf.zeros([channels]));
      }
      this.vars.push(v);
      this.inChannels.push(channels);
      channels = shapes[i].channels;
    });
  }

  trainableVariables(): tf.Variable[] {
    return this.vars.flatMap((v) =>
      [v.kernel, v.bias, v.gamma, v.beta].filter(
        (t): t is tf.Variable => t !== undefined));
  }

  paramCount(): number {
    return this.trainableVariables()
      .reduce((total, v) => total + v.size, 0);
  }

  /**
   * Forward pass. `x` is NHWC. Dropout fires only when training; its mask
   * is seeded per call so a fixed request seed reproduces the run.
   */
  forward(x: tf.Tensor, training: boolean, stepSeed = 0): tf.Tensor {
    return tf.tidy(() => {
      let h = x;
      let flat = false;
      this.arch.layers.forEach((layer, i) => {
        const v = this.vars[i];
        switch (layer.op) {
          case "conv2d": {
            if (layer.padding > 0) {
              h = tf.pad(h, [[0, 0], [layer.padding, layer.padding],
                             [layer.padding, layer.padding], [0, 0]]);
            }
            h = tf.conv2d(h as tf.Tensor4D, v.kernel as tf.Tensor4D,
                          layer.stride, "valid");
            if (v.bias) h = tf.add(h, v.bias);
            break;
          }
          case "pool": {
            const poolFn = layer.kind === "max" ? tf.maxPool : tf.avgPool;
            h = poolFn(h as tf.Tensor4D, layer.size, layer.stride, "valid");
            break;
          }
          case "global_pool":
            h = tf.mean(h, [1, 2], true);
            break;
          case "norm":
            h = this.applyNorm(h, layer, v, flat);
            break;
          case "act":
            h = this.applyAct(h, layer);
            break;
          case "dropout":
            if (training && layer.p > 0) {
              h = tf.dropout(h, layer.p, undefined, stepSeed * 1009 + i);
            }
            break;
          case "flatten":
            h = tf.reshape(h, [h.shape[0] as number, -1]);
            flat = true;
            break;
          case "dense":
            h = tf.matMul(h as tf.Tensor2D, v.kernel as tf.Tensor2D);
            if (v.bias) h = tf.add(h, v.bias);
            break;
        }
      });
      return h as tf.Tensor2D;
    });
  }

  private applyNorm(h: tf.Tensor, layer: Extract<Layer, { op: "norm" }>,
                    v: LayerVars, flat: boolean): tf.Tensor {
    if (layer.kind === "none") return h;
    const gamma = v.gamma as tf.Variable;
    const beta = v.beta as tf.Variable;
    if (layer.kind === "batch") {
      // batch statistics in both phases; there is no moving average to keep
      // the parameter count identical to the static analyzer's
      const axes = flat ? [0] : [0, 1, 2];
      return normalize(h, axes, gamma, beta);
    }
    if (layer.kind === "layer") {
      const axes = flat ? [1] : [1, 2, 3];
      return normalize(h, axes, gamma, beta);
    }
    // group: split the channel dim, normalize within each group
    const groups = layer.groups as number;
    const channels = gamma.size;
    const n = h.shape[0] as number;
    if (flat) {
      const grouped = tf.reshape(h, [n, groups, channels / groups]);
      const out = normalize(grouped, [2], tf.reshape(
        gamma, [1, groups, channels / groups]), tf.reshape(
        beta, [1, groups, channels / groups]));
      return tf.reshape(out, [n, channels]);
    }
    const [, hh, ww] = h.shape as number[];
    const grouped = tf.reshape(h, [n, hh, ww, groups, channels / groups]);
    const out = normalize(grouped, [1, 2, 4], tf.reshape(
      gamma, [1, 1, 1, groups, channels / groups]), tf.reshape(
      beta, [1, 1, 1, groups, channels / groups]));
    return tf.reshape(out, [n, hh, ww, channels]);
  }

  private applyAct(h: tf.Tensor,
                   layer: Extract<Layer, { op: "act" }>): tf.Tensor {
    switch (layer.kind) {
      case "relu": return tf.relu(h);
      case "gelu": return tf.mul(tf.mul(h, 0.5),
                                 tf.add(tf.erf(tf.div(h, Math.SQRT2)), 1));
      case "sigmoid": return tf.sigmoid(h);
      case "tanh": return tf.tanh(h);
    }
  }

  dispose(): void {
    this.trainableVariables().forEach((v) => v.dispose());
  }
}
