/**
 * TARAEMB1 binary embedding files.
 *
 * 24-byte little-endian header: magic "TARAEMB1", version u32 = 1, rows
 * u32, dim u32, dtype byte (0 = float32), normalized byte, 2 reserved zero
 * bytes. Payload is the row-major float32 matrix. The manifest sidecar is
 * one {"row", "id"} JSON object per line in row order.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

export const MAGIC = "TARAEMB1";
export const VERSION = 1;
export const HEADER_SIZE = 24;
export const DTYPE_F32 = 0;

export interface EmbeddingFile {
  ids: string[];
  rows: number;
  dim: number;
  normalized: boolean;
  data: Float32Array; // row-major
}

export function packHeader(rows: number, dim: number, normalized: boolean): Buffer {
  const header = Buffer.alloc(HEADER_SIZE);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 8);
  header.writeUInt32LE(rows, 12);
  header.writeUInt32LE(dim, 16);
  header.writeUInt8(DTYPE_F32, 20);
  header.writeUInt8(normalized ? 1 : 0, 21);
  return header;
}

export function encode(vectors: Float32Array[], normalized: boolean): Buffer {
  const rows = vectors.length;
  const dim = rows ? vectors[0].length : 0;
  const payload = Buffer.alloc(rows * dim * 4);
  vectors.forEach((vec, r) => {
    if (vec.length !== dim) {
      throw new Error(`row ${r} has dim ${vec.length}, expected ${dim}`);
    }
    for (let i = 0; i < dim; i += 1) {
      payload.writeFloatLE(vec[i], (r * dim + i) * 4);
    }
  });
  return Buffer.concat([packHeader(rows, dim, normalized), payload]);
}

export function manifestLines(ids: string[]): string {
  return ids.map((id, row) => JSON.stringify({ row, id })).join("\n") + (ids.length ? "\n" : "");
}

async function writeAtomic(filePath: string, data: Buffer | string): Promise<void> {
  const dir = path.dirname(path.resolve(filePath));
  await fs.mkdir(dir, { recursive: true });
  const tmp = path.join(dir, `.tmp-${process.pid}-${Date.now()}-${path.basename(filePath)}`);
  await fs.writeFile(tmp, data);
  await fs.rename(tmp, filePath);
}

export async function writeEmbeddings(
  ids: string[],
  vectors: Float32Array[],
  normalized: boolean,
  filePath: string,
  manifestPath: string,
): Promise<void> {
  if (ids.length !== vectors.length) {
    throw new Error(`${ids.length} ids but ${vectors.length} vectors`);
  }
  await writeAtomic(filePath, encode(vectors, normalized));
  await writeAtomic(manifestPath, manifestLines(ids));
}

export function decode(blob: Buffer): Omit<EmbeddingFile, "ids"> {
  if (blob.length < HEADER_SIZE) {
    throw new Error(`file shorter than the ${HEADER_SIZE}-byte header`);
  }
  if (blob.toString("ascii", 0, 8) !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(blob.toString("ascii", 0, 8))}`);
  }
  const version = blob.readUInt32LE(8);
  if (version !== VERSION) {
    throw new Error(`unsupported version ${version}`);
  }
  const rows = blob.readUInt32LE(12);
  const dim = blob.readUInt32LE(16);
  if (blob.readUInt8(20) !== DTYPE_F32) {
    throw new Error(`unsupported dtype code ${blob.readUInt8(20)}`);
  }
  const normalized = blob.readUInt8(21) === 1;
  const expected = rows * dim * 4;
  const actual = blob.length - HEADER_SIZE;
  if (expected !== actual) {
    throw new Error(`size mismatch: expected ${expected} payload bytes, got ${actual}`);
  }
  const data = new Float32Array(rows * dim);
  for (let i = 0; i < data.length; i += 1) {
    data[i] = blob.readFloatLE(HEADER_SIZE + i * 4);
  }
  return { rows, dim, normalized, data };
}

export async function readEmbeddings(
  filePath: string,
  manifestPath: string,
): Promise<EmbeddingFile> {
  const body = decode(await fs.readFile(filePath));
  const ids: string[] = new Array(body.rows);
  const seen = new Set<number>();
  const text = await fs.readFile(manifestPath, "utf-8");
  for (const line of text.split("\n")) {
    if (!line.trim()) continue;
    const entry = JSON.parse(line) as { row: number; id: string };
    if (seen.has(entry.row)) {
      throw new Error(`duplicate manifest row ${entry.row}`);
    }
    seen.add(entry.row);
    ids[entry.row] = entry.id;
  }
  if (seen.size !== body.rows) {
    throw new Error(`manifest has ${seen.size} rows, header says ${body.rows}`);
  }
  return { ids, ...body };
}
