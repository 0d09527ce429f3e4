/**
 * Seeded random streams so weight files are reproducible from a single
 * integer. mulberry32 is a small 32-bit generator with good statistical
 * behaviour for initialization purposes; gaussians come from Box-Muller.
 */

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

export function gaussian(rand: () => number): () => number {
  let spare: number | null = null
  return () => {
    if (spare !== null) {
      const v = spare
      spare = null
      return v
    }
    let u = rand()
    // log(0) guard
    while (u <= Number.EPSILON) u = rand()
    const r = Math.sqrt(-2 * Math.log(u))
    const theta = 2 * Math.PI * rand()
    spare = r * Math.sin(theta)
    return r * Math.cos(theta)
  }
}
