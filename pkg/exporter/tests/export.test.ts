import { promises as fs } from "node:fs";
import os from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { HEADER_SIZE, MAGIC, readEmbeddings, VERSION } from "../src/embfile.js";
import { MockModel } from "../src/mock.js";
import { defaultTemplate, validateTemplate } from "../src/templates.js";
import { exportTextEmbeddings } from "../src/textExport.js";
import { exportVideoEmbeddings } from "../src/videoExport.js";

let dir: string;

beforeEach(async () => {
  dir = await fs.mkdtemp(path.join(os.tmpdir(), "exporter-test-"));
});

afterEach(async () => {
  await fs.rm(dir, { recursive: true, force: true });
});

describe("templates", () => {
  it("defaults carry exactly the required placeholders", () => {
    for (const modality of ["text", "video", "video_plus_text", "video_plus_action"] as const) {
      expect(() => validateTemplate(defaultTemplate(modality))).not.toThrow();
    }
  });

  it("rejects missing or foreign placeholders", () => {
    expect(() => validateTemplate({ modality: "text", template: "no slot here" }))
      .toThrow(/must contain \[sent\]/);
    expect(() => validateTemplate({ modality: "text", template: "[sent] with [video]" }))
      .toThrow(/must not contain \[video\]/);
    expect(() => validateTemplate({ modality: "video", template: "only [video] [action]" }))
      .toThrow(/must not contain \[action\]/);
  });
});

describe("export-text", () => {
  it("writes a valid header and unit-norm rows the reader roundtrips", async () => {
    const emb = path.join(dir, "t.emb");
    const man = path.join(dir, "t.manifest.jsonl");
    const model = new MockModel(1, 32);
    const sentences = ["the person opens the box 00.", "the person closes the box 00."];
    const count = await exportTextEmbeddings(
      sentences, model, defaultTemplate("text"), emb, man,
    );
    expect(count).toBe(2);
    const blob = await fs.readFile(emb);
    expect(blob.toString("ascii", 0, 8)).toBe(MAGIC);
    expect(blob.readUInt32LE(8)).toBe(VERSION);
    expect(blob.readUInt32LE(12)).toBe(2);
    expect(blob.readUInt32LE(16)).toBe(32);
    expect(blob.readUInt8(21)).toBe(1);
    expect(blob.length).toBe(HEADER_SIZE + 2 * 32 * 4);
    const back = await readEmbeddings(emb, man);
    expect(back.ids).toEqual(sentences);
    for (let r = 0; r < back.rows; r += 1) {
      let norm = 0;
      for (let i = 0; i < back.dim; i += 1) {
        norm += back.data[r * back.dim + i] ** 2;
      }
      expect(Math.abs(Math.sqrt(norm) - 1)).toBeLessThan(1e-5);
    }
  });

  it("is byte-deterministic across runs", async () => {
    const blobs: Buffer[] = [];
    for (const name of ["a", "b"]) {
      const emb = path.join(dir, `${name}.emb`);
      await exportTextEmbeddings(
        ["one sentence", "another sentence"], new MockModel(5, 16),
        defaultTemplate("text"), emb, path.join(dir, `${name}.manifest.jsonl`),
      );
      blobs.push(await fs.readFile(emb));
    }
    expect(blobs[0].equals(blobs[1])).toBe(true);
  });

  it("dedupes repeated sentences and rejects empty input", async () => {
    const emb = path.join(dir, "t.emb");
    const man = path.join(dir, "t.manifest.jsonl");
    const count = await exportTextEmbeddings(
      ["same", "same", "other"], new MockModel(0, 8), defaultTemplate("text"), emb, man,
    );
    expect(count).toBe(2);
    await expect(
      exportTextEmbeddings([], new MockModel(0, 8), defaultTemplate("text"), emb, man),
    ).rejects.toThrow(/no sentences/);
  });

  it("rejects a template without the sentence slot", async () => {
    await expect(
      exportTextEmbeddings(
        ["x"], new MockModel(0, 8),
        { modality: "text", template: "broken" },
        path.join(dir, "t.emb"), path.join(dir, "t.manifest.jsonl"),
      ),
    ).rejects.toThrow(/must contain \[sent\]/);
  });
});

describe("export-video", () => {
  async function writeVideo(name: string, id: string, frames: number): Promise<string> {
    const p = path.join(dir, name);
    await fs.writeFile(p, JSON.stringify({
      id, frames: Array.from({ length: frames }, (_, i) => `frame ${i} of ${id}`),
    }));
    return p;
  }

  it("embeds sampled frames deterministically", async () => {
    const v1 = await writeVideo("v1.json", "vid-1", 160);
    const v2 = await writeVideo("v2.json", "vid-2", 40);
    const emb = path.join(dir, "v.emb");
    const man = path.join(dir, "v.manifest.jsonl");
    const result = await exportVideoEmbeddings(
      [v1, v2], new MockModel(3, 24), 16, defaultTemplate("video"), emb, man,
    );
    expect(result.exported).toBe(2);
    expect(result.skipped).toEqual([]);
    const back = await readEmbeddings(emb, man);
    expect(back.ids).toEqual(["vid-1", "vid-2"]);
    expect(back.normalized).toBe(true);

    const emb2 = path.join(dir, "v2run.emb");
    await exportVideoEmbeddings(
      [v1, v2], new MockModel(3, 24), 16, defaultTemplate("video"),
      emb2, path.join(dir, "v2run.manifest.jsonl"),
    );
    expect((await fs.readFile(emb)).equals(await fs.readFile(emb2))).toBe(true);
  });

  it("skips undecodable files with a diagnostic and keeps going", async () => {
    const good = await writeVideo("good.json", "vid-good", 8);
    const bad = path.join(dir, "bad.json");
    await fs.writeFile(bad, "not json at all {");
    const result = await exportVideoEmbeddings(
      [bad, good], new MockModel(0, 8), 4, defaultTemplate("video"),
      path.join(dir, "v.emb"), path.join(dir, "v.manifest.jsonl"),
    );
    expect(result.exported).toBe(1);
    expect(result.skipped).toEqual([bad]);
    const back = await readEmbeddings(
      path.join(dir, "v.emb"), path.join(dir, "v.manifest.jsonl"),
    );
    expect(back.ids).toEqual(["vid-good"]);
  });

  it("regenerates the committed cross-package fixtures byte-exactly", async () => {
    // The companion toolkit pins these files (mock seed 42, dim 16); any
    // drift in the mock or the format shows up here first.
    const here = path.dirname(fileURLToPath(import.meta.url));
    const fixtureDir = path.join(here, "..", "..", "tests", "data");
    const textFixture = path.join(fixtureDir, "exporter_text.emb");
    try {
      await fs.access(textFixture);
    } catch {
      return; // standalone checkout without the companion fixtures
    }
    const emb = path.join(dir, "regen.emb");
    const man = path.join(dir, "regen.manifest.jsonl");
    await exportTextEmbeddings(
      ["The person opens the box 00.", "The person closes the box 00.", "A dog is swimming."],
      new MockModel(42, 16), defaultTemplate("text"), emb, man,
    );
    expect((await fs.readFile(emb)).equals(await fs.readFile(textFixture))).toBe(true);
    expect((await fs.readFile(man, "utf-8"))).toBe(
      await fs.readFile(path.join(fixtureDir, "exporter_text.manifest.jsonl"), "utf-8"),
    );

    const videoFixture = path.join(fixtureDir, "exporter_video.emb");
    const vids: string[] = [];
    for (const [id, total] of [["clip-a", 160], ["clip-b", 40]] as const) {
      const p = path.join(dir, `${id}.json`);
      await fs.writeFile(p, JSON.stringify({
        id, frames: Array.from({ length: total }, (_, i) => `${id[5]}${i}`),
      }));
      vids.push(p);
    }
    const vEmb = path.join(dir, "vregen.emb");
    await exportVideoEmbeddings(
      vids, new MockModel(42, 16), 16, defaultTemplate("video"),
      vEmb, path.join(dir, "vregen.manifest.jsonl"),
    );
    expect((await fs.readFile(vEmb)).equals(await fs.readFile(videoFixture))).toBe(true);
  });

  it("frame count changes the embedding (sampling matters)", async () => {
    const v = await writeVideo("v.json", "vid", 64);
    const model = new MockModel(0, 16);
    const out: Buffer[] = [];
    for (const frames of [4, 16]) {
      const emb = path.join(dir, `f${frames}.emb`);
      await exportVideoEmbeddings(
        [v], model, frames, defaultTemplate("video"),
        emb, path.join(dir, `f${frames}.manifest.jsonl`),
      );
      out.push(await fs.readFile(emb));
    }
    expect(out[0].equals(out[1])).toBe(false);
  });
});
