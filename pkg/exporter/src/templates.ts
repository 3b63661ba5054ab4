/**
 * One-word-summary prompt templates per input modality.
 *
 * Each modality requires an exact placeholder set; the text template is the
 * "means in one word" form whose next-token hidden state serves as the
 * sentence embedding.
 */

import { promises as fs } from "node:fs";

export type Modality = "text" | "video" | "video_plus_text" | "video_plus_action";

export interface PromptTemplate {
  modality: Modality;
  template: string;
}

const PLACEHOLDERS = ["[sent]", "[video]", "[action]"] as const;

const REQUIRED: Record<Modality, readonly string[]> = {
  text: ["[sent]"],
  video: ["[video]"],
  video_plus_text: ["[video]", "[sent]"],
  video_plus_action: ["[video]", "[action]"],
};

export const DEFAULT_TEMPLATES: Record<Modality, string> = {
  text: "This sentence: [sent] means in one word:",
  video: "USER: [video]\nSummarize the video in one word:\nASSISTANT:",
  video_plus_text:
    "USER: [video]\nEdit instruction: [sent]\nImagine the given text edit instruction " +
    "applied on the given video. Summarize the resulting video in one word.\nASSISTANT:",
  video_plus_action:
    "USER: [video]\nAction: This video shows the action [action]\n" +
    "Look at the video carefully. Summarize the action in the video in one word:\nASSISTANT:",
};

export function validateTemplate(tpl: PromptTemplate): PromptTemplate {
  const required = REQUIRED[tpl.modality];
  if (!required) {
    throw new Error(`unknown modality ${JSON.stringify(tpl.modality)}`);
  }
  for (const ph of required) {
    if (!tpl.template.includes(ph)) {
      throw new Error(`${tpl.modality} template must contain ${ph}`);
    }
  }
  for (const ph of PLACEHOLDERS) {
    if (!required.includes(ph) && tpl.template.includes(ph)) {
      throw new Error(`${tpl.modality} template must not contain ${ph}`);
    }
  }
  return tpl;
}

export function defaultTemplate(modality: Modality): PromptTemplate {
  return { modality, template: DEFAULT_TEMPLATES[modality] };
}

export async function loadTemplateFile(
  filePath: string,
  expected: Modality,
): Promise<PromptTemplate> {
  const doc = JSON.parse(await fs.readFile(filePath, "utf-8")) as PromptTemplate;
  if (doc.modality !== expected) {
    throw new Error(`template file is for ${doc.modality}, expected ${expected}`);
  }
  return validateTemplate(doc);
}

export function fill(tpl: PromptTemplate, slots: Partial<Record<"sent" | "video" | "action", string>>): string {
  let out = tpl.template;
  for (const [key, value] of Object.entries(slots)) {
    out = out.split(`[${key}]`).join(value ?? "");
  }
  return out;
}
