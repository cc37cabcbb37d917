/**
 * Process entry point: read one JSON request from standard input, train,
 * stream events to standard output. Invoked with no arguments.
 */

import { Trainer } from "./train";
import { Sink, formatEvent, parseRequest, stdoutSink } from "./protocol";

function readStdin(): Promise<string> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    process.stdin.on("data", (chunk) => chunks.push(chunk));
    process.stdin.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
    process.stdin.on("error", reject);
  });
}

export async function serve(requestText: string, sink: Sink): Promise<number> {
  let trainer: Trainer;
  try {
    trainer = new Trainer(parseRequest(requestText));
  } catch (e) {
    sink(formatEvent({ event: "error", message: (e as Error).message }));
    return 1;
  }
  try {
    trainer.run(sink);
  } catch (e) {
    sink(formatEvent({ event: "error", message: (e as Error).message }));
    return 1;
  } finally {
    trainer.dispose();
  }
  return 0;
}

async function main(): Promise<void> {
  const text = await readStdin();
  process.exitCode = await serve(text, stdoutSink);
}

if (require.main === module) {
  main().catch((e) => {
    stdoutSink(formatEvent({ event: "error", message: String(e) }));
    process.exitCode = 1;
  });
}
