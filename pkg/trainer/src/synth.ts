/**
 * Synthetic dataset generator so tests and demos need no download.
 *
 * Images are flat color fields with noise; the class sets the brightness
 * band, so any conv plus dense stack separates them quickly. Demographic
 * columns rotate through the schema groups, and the last attribute is
 * written as a numeric age to exercise the binning path.
 */

import * as fs from "fs";
import * as path from "path";

import { SchemaAttribute, encodePpm } from "./dataset";
import { Rng } from "./rng";

export interface SynthOptions {
  dir: string;
  count: number;
  numClasses: number;
  height: number;
  width: number;
  seed: number;
  schema: SchemaAttribute[];
  /** Write ages as numbers for this attribute (needs 3 groups). */
  numericAgeAttr?: string;
}

const AGE_BY_INDEX = [22, 48, 77];

export function writeSynthDataset(opts: SynthOptions): void {
  const rng = new Rng(opts.seed);
  const imagesDir = path.join(opts.dir, "images");
  fs.mkdirSync(imagesDir, { recursive: true });
  const rows = ["sample_id,label," + opts.schema.map((a) => a.name).join(",")];
  for (let i = 0; i < opts.count; i++) {
    const sampleId = `s${String(i).padStart(4, "0")}`;
    const label = i % opts.numClasses;
    const cells: string[] = [];
    opts.schema.forEach((attr, k) => {
      const index = Math.floor(i / (k + 1)) % attr.groups.length;
      if (attr.name === opts.numericAgeAttr) {
        cells.push(String(AGE_BY_INDEX[index] + rng.int(3)));
      } else {
        cells.push(attr.groups[index]);
      }
    });
    rows.push(`${sampleId},${label},${cells.join(",")}`);

    // brightness band per class, e.g. two classes get means 64 and 192
    const mean = Math.round(255 * (label + 0.5) / opts.numClasses);
    const bytes = new Uint8Array(opts.height * opts.width * 3);
    for (let b = 0; b < bytes.length; b++) {
      const noisy = mean + Math.round((rng.next() - 0.5) * 60);
      bytes[b] = Math.min(255, Math.max(0, noisy));
    }
    fs.writeFileSync(
      path.join(imagesDir, `${sampleId}.ppm`),
      encodePpm({ width: opts.width, height: opts.height, bytes }));
  }
  fs.writeFileSync(path.join(opts.dir, "metadata.csv"),
                   rows.join("\n") + "\n");
  fs.writeFileSync(
    path.join(opts.dir, "schema.json"),
    JSON.stringify({
      attributes: opts.schema.map((a) => ({ name: a.name, groups: a.groups })),
    }, null, 2) + "\n");
}
