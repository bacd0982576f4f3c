/**
 * CLI entry: serve one model over stdio or TCP.
 *
 *   node dist/main.js --stdio --model zero
 *   node dist/main.js --listen 127.0.0.1:7070 --model echo [--max-elements N]
 *
 * stdio mode serves exactly one session and exits 0 on BYE / stdin close.
 * TCP mode accepts any number of connections, one session each; requests
 * within a session are handled strictly in order.
 */

import * as net from "net";

import { MODEL_NAMES, loadModel, DenoiseModel } from "./models";
import { MSG_ERROR, encodeFrame } from "./protocol";
import { DEFAULT_MAX_ELEMENTS, Session } from "./server";

interface Args {
  model: string;
  stdio: boolean;
  listen?: string;
  maxElements: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { model: "", stdio: false, maxElements: DEFAULT_MAX_ELEMENTS };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--model") args.model = argv[++i] ?? "";
    else if (a === "--stdio") args.stdio = true;
    else if (a === "--listen") args.listen = argv[++i];
    else if (a === "--max-elements") args.maxElements = Number(argv[++i]);
    else {
      usage(`unknown argument ${a}`);
    }
  }
  if (!args.model) usage("--model is required");
  if (args.stdio === Boolean(args.listen)) usage("pick exactly one of --stdio / --listen");
  if (!Number.isInteger(args.maxElements) || args.maxElements < 1) {
    usage("--max-elements must be a positive integer");
  }
  return args;
}

function usage(problem: string): never {
  process.stderr.write(
    `error: ${problem}\n` +
    `usage: main.js --model <${MODEL_NAMES.join("|")}> (--stdio | --listen host:port) [--max-elements N]\n`,
  );
  process.exit(2);
}

function serveStdio(model: DenoiseModel, maxElements: number): void {
  const session = new Session(
    model,
    (data) => process.stdout.write(data),
    () => process.exit(0),
    { maxElements },
  );
  process.stdin.on("data", (chunk: Buffer) => session.feed(chunk));
  process.stdin.on("end", () => process.exit(0));
}

function serveTcp(model: DenoiseModel, listen: string, maxElements: number): void {
  const sep = listen.lastIndexOf(":");
  const host = listen.slice(0, sep);
  const port = Number(listen.slice(sep + 1));
  if (!host || !Number.isInteger(port)) usage(`bad --listen address ${listen}`);
  const server = net.createServer((conn) => {
    const session = new Session(
      model,
      (data) => conn.write(data),
      () => conn.end(),
      { maxElements },
    );
    conn.on("data", (chunk) => session.feed(chunk));
    conn.on("error", () => conn.destroy());
  });
  server.listen(port, host, () => {
    const addr = server.address() as net.AddressInfo;
    process.stderr.write(`listening on ${addr.address}:${addr.port} (model ${model.name})\n`);
  });
}

function main(): void {
  const args = parseArgs(process.argv.slice(2));
  let model: DenoiseModel;
  try {
    model = loadModel(args.model);
  } catch (e) {
    // surface the load failure on the wire where possible, then exit
    if (args.stdio) {
      process.stdout.write(encodeFrame(MSG_ERROR, {
        code: "MODEL",
        message: String(e),
      }));
    }
    process.stderr.write(`${e}\n`);
    process.exit(1);
  }
  if (args.stdio) serveStdio(model, args.maxElements);
  else serveTcp(model, args.listen!, args.maxElements);
}

main();
