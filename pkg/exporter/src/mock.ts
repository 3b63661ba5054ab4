/**
 * Deterministic mock embedding model.
 *
 * A pure function of (text, seed): the prompt bytes seed an FNV-1a 64-bit
 * hash, an xorshift64* stream turns it into `dim` uniforms in [-1, 1), and
 * the vector is L2-normalized in float64 before the float32 cast. Every
 * step is integer- or IEEE-exact, so output bytes are stable across
 * processes and platforms.
 */

const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x00000100000001b3n;
const MASK64 = 0xffffffffffffffffn;
const XORSHIFT_MULT = 2685821657736338717n;

function fnv1a64(bytes: Uint8Array, state: bigint = FNV_OFFSET): bigint {
  let h = state;
  for (const b of bytes) {
    h ^= BigInt(b);
    h = (h * FNV_PRIME) & MASK64;
  }
  return h;
}

function seedBytes(seed: number): Uint8Array {
  const buf = new ArrayBuffer(8);
  new DataView(buf).setBigUint64(0, BigInt.asUintN(64, BigInt(Math.trunc(seed))), true);
  return new Uint8Array(buf);
}

class XorShift64Star {
  private state: bigint;

  constructor(state: bigint) {
    this.state = state === 0n ? 0x9e3779b97f4a7c15n : state;
  }

  next(): bigint {
    let x = this.state;
    x ^= (x >> 12n) & MASK64;
    x = (x ^ ((x << 25n) & MASK64)) & MASK64;
    x ^= (x >> 27n) & MASK64;
    this.state = x;
    return (x * XORSHIFT_MULT) & MASK64;
  }

  /** Uniform double in [0, 1) from the top 53 bits. */
  uniform(): number {
    return Number(this.next() >> 11n) / 9007199254740992;
  }
}

export interface EmbeddingModel {
  readonly id: string;
  readonly dim: number;
  embed(text: string): Float32Array;
}

export class MockModel implements EmbeddingModel {
  readonly id = "mock";
  readonly dim: number;
  private readonly seed: number;

  constructor(seed = 0, dim = 64) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`dim must be a positive integer, got ${dim}`);
    }
    this.seed = seed;
    this.dim = dim;
  }

  embed(text: string): Float32Array {
    const h = fnv1a64(new TextEncoder().encode(text), fnv1a64(seedBytes(this.seed)));
    const rng = new XorShift64Star(h);
    const values = new Float64Array(this.dim);
    let sumSq = 0;
    for (let i = 0; i < this.dim; i += 1) {
      const v = 2 * rng.uniform() - 1;
      values[i] = v;
      sumSq += v * v;
    }
    const norm = Math.sqrt(sumSq) || 1;
    const out = new Float32Array(this.dim);
    for (let i = 0; i < this.dim; i += 1) {
      out[i] = values[i] / norm;
    }
    return out;
  }
}

export function loadModel(id: string, seed: number, dim: number): EmbeddingModel {
  if (id === "mock") {
    return new MockModel(seed, dim);
  }
  throw new Error(
    `model load failure: ${JSON.stringify(id)} is not available in this build (only "mock")`,
  );
}
