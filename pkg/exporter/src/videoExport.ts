/**
 * Video embedding export for the mock path.
 *
 * Videos arrive as frame-manifest JSON files {"id", "frames": [str]};
 * uniformly spaced frames are sampled and spliced into the video prompt.
 * Undecodable files are skipped with a diagnostic and never reach the
 * manifest.
 */

import { promises as fs } from "node:fs";

import { writeEmbeddings } from "./embfile.js";
import { sampleFrameIndices } from "./frames.js";
import type { EmbeddingModel } from "./mock.js";
import { fill, validateTemplate, type PromptTemplate } from "./templates.js";

export interface VideoDocument {
  id: string;
  frames: string[];
}

export function parseVideoDocument(raw: string, where: string): VideoDocument {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (err) {
    throw new Error(`${where}: not valid JSON (${(err as Error).message})`);
  }
  const video = doc as VideoDocument;
  if (typeof video?.id !== "string" || !video.id) {
    throw new Error(`${where}: missing video id`);
  }
  if (!Array.isArray(video.frames) || video.frames.length === 0 ||
      video.frames.some((f) => typeof f !== "string")) {
    throw new Error(`${where}: frames must be a non-empty string array`);
  }
  return video;
}

export function embedVideo(
  video: VideoDocument,
  model: EmbeddingModel,
  frames: number,
  template: PromptTemplate,
): Float32Array {
  const indices = sampleFrameIndices(video.frames.length, frames);
  const sampled = indices.map((i) => video.frames[i]).join("\n");
  return model.embed(fill(template, { video: sampled }));
}

export async function exportVideoEmbeddings(
  videoPaths: string[],
  model: EmbeddingModel,
  frames: number,
  template: PromptTemplate,
  filePath: string,
  manifestPath: string,
): Promise<{ exported: number; skipped: string[] }> {
  if (!["video", "video_plus_text", "video_plus_action"].includes(template.modality)) {
    throw new Error(`video export needs a video template, got ${template.modality}`);
  }
  validateTemplate(template);
  const ids: string[] = [];
  const vectors: Float32Array[] = [];
  const skipped: string[] = [];
  for (const videoPath of videoPaths) {
    let video: VideoDocument;
    try {
      video = parseVideoDocument(await fs.readFile(videoPath, "utf-8"), videoPath);
    } catch (err) {
      console.error(`skipping undecodable video: ${(err as Error).message}`);
      skipped.push(videoPath);
      continue;
    }
    if (ids.includes(video.id)) {
      throw new Error(`duplicate video id ${JSON.stringify(video.id)}`);
    }
    ids.push(video.id);
    vectors.push(embedVideo(video, model, frames, template));
  }
  if (ids.length === 0) {
    throw new Error("no decodable videos to embed");
  }
  await writeEmbeddings(ids, vectors, true, filePath, manifestPath);
  return { exported: ids.length, skipped };
}
