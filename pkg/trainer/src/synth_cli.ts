/** Write a synthetic dataset: synth_cli.ts OUT_DIR [COUNT] [CLASSES] [SIZE] */

import { writeSynthDataset } from "./synth";

const [dir, count, classes, size] = process.argv.slice(2);
if (!dir) {
  console.error("usage: synth_cli.ts OUT_DIR [COUNT] [CLASSES] [SIZE]");
  process.exit(2);
}
writeSynthDataset({
  dir,
  count: Number(count ?? 240),
  numClasses: Number(classes ?? 2),
  height: Number(size ?? 8),
  width: Number(size ?? 8),
  seed: 7,
  schema: [
    { name: "gender", groups: ["male", "female"] },
    { name: "age", groups: ["young", "middle", "old"] },
  ],
  numericAgeAttr: "age",
});
console.error(`wrote ${dir}`);
