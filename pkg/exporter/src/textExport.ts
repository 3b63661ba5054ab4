/**
 * Text embedding export: apply the one-word-summary prompt to each sentence
 * and write the model's vectors in file order.
 */

import { writeEmbeddings } from "./embfile.js";
import type { EmbeddingModel } from "./mock.js";
import { fill, validateTemplate, type PromptTemplate } from "./templates.js";

export function embedSentences(
  sentences: string[],
  model: EmbeddingModel,
  template: PromptTemplate,
): { ids: string[]; vectors: Float32Array[] } {
  if (template.modality !== "text") {
    throw new Error(`text export needs a text template, got ${template.modality}`);
  }
  validateTemplate(template);
  if (sentences.length === 0) {
    throw new Error("no sentences to embed");
  }
  for (const s of sentences) {
    if (!s.trim()) {
      throw new Error("empty sentence in input");
    }
  }
  // Duplicate sentences would collide in the manifest (ids are the
  // sentences); the model is deterministic so dropping repeats is lossless.
  const ids: string[] = [];
  const seen = new Set<string>();
  for (const s of sentences) {
    if (!seen.has(s)) {
      seen.add(s);
      ids.push(s);
    }
  }
  const vectors = ids.map((s) => model.embed(fill(template, { sent: s })));
  return { ids, vectors };
}

export async function exportTextEmbeddings(
  sentences: string[],
  model: EmbeddingModel,
  template: PromptTemplate,
  filePath: string,
  manifestPath: string,
): Promise<number> {
  const { ids, vectors } = embedSentences(sentences, model, template);
  await writeEmbeddings(ids, vectors, true, filePath, manifestPath);
  return ids.length;
}
