/**
 * Uniform frame sampling over a video's duration.
 *
 * Fractional indices round half-down; a single-frame request takes the
 * middle frame floor(N / 2).
 */

export function roundHalfDown(x: number): number {
  return Math.ceil(x - 0.5) + 0; // + 0 folds Math.ceil's negative zero into +0
}

export function sampleFrameIndices(totalFrames: number, frames: number): number[] {
  if (!Number.isInteger(totalFrames) || totalFrames < 1) {
    throw new Error(`totalFrames must be a positive integer, got ${totalFrames}`);
  }
  if (!Number.isInteger(frames) || frames < 1) {
    throw new Error(`frames must be >= 1, got ${frames}`);
  }
  if (frames === 1) {
    return [Math.floor(totalFrames / 2)];
  }
  const indices: number[] = [];
  for (let i = 0; i < frames; i += 1) {
    const idx = roundHalfDown((i * totalFrames) / frames);
    indices.push(Math.min(idx, totalFrames - 1));
  }
  return indices;
}
