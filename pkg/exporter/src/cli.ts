#!/usr/bin/env node
/**
 * Exporter CLI: export-text, export-video, serve.
 */

import { promises as fs } from "node:fs";
import process from "node:process";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadModel } from "./mock.js";
import { serve } from "./server.js";
import { defaultTemplate, loadTemplateFile, type Modality } from "./templates.js";
import { exportTextEmbeddings } from "./textExport.js";
import { exportVideoEmbeddings } from "./videoExport.js";

async function resolveTemplate(file: string | undefined, modality: Modality) {
  return file ? loadTemplateFile(file, modality) : defaultTemplate(modality);
}

const commonModelOptions = {
  model: { type: "string" as const, default: "mock", describe: "mock or a model id" },
  seed: { type: "number" as const, default: 0 },
  dim: { type: "number" as const, default: 64, describe: "embedding width (mock model)" },
};

async function main(): Promise<number> {
  const parser = yargs(hideBin(process.argv))
    .scriptName("tara-exporter")
    .strict()
    .exitProcess(false)
    .command(
      "export-text",
      "embed sentences (one per line) into a TARAEMB1 file",
      {
        ...commonModelOptions,
        input: { type: "string", demandOption: true, describe: "sentence file, one per line" },
        out: { type: "string", demandOption: true },
        manifest: { type: "string", demandOption: true },
        "template-file": { type: "string", describe: "JSON {modality, template}" },
      },
      async (args) => {
        const raw = await fs.readFile(args.input, "utf-8");
        const sentences = raw.split("\n").filter((line) => line.trim().length > 0);
        const model = loadModel(args.model, args.seed, args.dim);
        const template = await resolveTemplate(args["template-file"], "text");
        const count = await exportTextEmbeddings(
          sentences, model, template, args.out, args.manifest,
        );
        console.log(`export-text: ${count} embeddings (dim=${model.dim}) -> ${args.out}`);
      },
    )
    .command(
      "export-video",
      "embed frame-manifest videos into a TARAEMB1 file",
      {
        ...commonModelOptions,
        inputs: {
          type: "string", array: true, demandOption: true,
          describe: "video JSON files ({id, frames: [str]})",
        },
        frames: { type: "number", default: 16, describe: "frames sampled per video" },
        out: { type: "string", demandOption: true },
        manifest: { type: "string", demandOption: true },
        "template-file": { type: "string" },
      },
      async (args) => {
        const model = loadModel(args.model, args.seed, args.dim);
        const template = await resolveTemplate(args["template-file"], "video");
        const { exported, skipped } = await exportVideoEmbeddings(
          args.inputs, model, args.frames, template, args.out, args.manifest,
        );
        console.log(
          `export-video: ${exported} embeddings, ${skipped.length} skipped -> ${args.out}`,
        );
      },
    )
    .command(
      "serve",
      "run the HTTP embedding service (/embed, /healthz)",
      {
        ...commonModelOptions,
        port: { type: "number", default: 8731 },
      },
      async (args) => {
        const model = loadModel(args.model, args.seed, args.dim);
        await serve(model, args.port);
        await new Promise(() => undefined); // run until killed
      },
    )
    .demandCommand(1)
    .fail((msg, err) => {
      throw err ?? new Error(msg);
    });

  try {
    await parser.parseAsync();
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
