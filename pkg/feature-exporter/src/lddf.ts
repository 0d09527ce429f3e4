/**
 * LDDF feature tables: the binary interchange format the place recognition
 * core reads with its own loader. Layout (little endian):
 *
 *     "LDDF" | u32 version=1 | u32 count | u32 dim
 *     count * ( u16 x1,y1,x2,y2 | dim * f32 )
 *
 * Byte length must match the header exactly and boxes must be unique.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

export const LDDF_VERSION = 1
const MAGIC = Buffer.from('LDDF', 'ascii')
const HEADER_BYTES = 16

export interface Box {
  x1: number
  y1: number
  x2: number
  y2: number
}

export interface FeatureRecord {
  box: Box
  values: Float32Array
}

function boxKey(b: Box): string {
  return `${b.x1},${b.y1},${b.x2},${b.y2}`
}

function checkBox(b: Box): void {
  for (const v of [b.x1, b.y1, b.x2, b.y2]) {
    if (!Number.isInteger(v) || v < 0 || v > 0xffff) {
      throw new Error(`box (${boxKey(b)}) outside u16 coordinate range`)
    }
  }
  if (b.x2 <= b.x1 || b.y2 <= b.y1) {
    throw new Error(`degenerate box (${boxKey(b)})`)
  }
}

/** Serialize records to LDDF bytes. `dim` governs empty tables too. */
export function encodeLddf(records: FeatureRecord[], dim: number): Buffer {
  const seen = new Set<string>()
  for (const rec of records) {
    checkBox(rec.box)
    if (rec.values.length !== dim) {
      throw new Error(`record dim ${rec.values.length} != table dim ${dim}`)
    }
    const key = boxKey(rec.box)
    if (seen.has(key)) throw new Error(`duplicate box (${key})`)
    seen.add(key)
  }
  const recordBytes = 8 + 4 * dim
  const buf = Buffer.alloc(HEADER_BYTES + records.length * recordBytes)
  MAGIC.copy(buf, 0)
  buf.writeUInt32LE(LDDF_VERSION, 4)
  buf.writeUInt32LE(records.length, 8)
  buf.writeUInt32LE(dim, 12)
  let off = HEADER_BYTES
  for (const rec of records) {
    buf.writeUInt16LE(rec.box.x1, off)
    buf.writeUInt16LE(rec.box.y1, off + 2)
    buf.writeUInt16LE(rec.box.x2, off + 4)
    buf.writeUInt16LE(rec.box.y2, off + 6)
    off += 8
    for (let i = 0; i < dim; i++) {
      buf.writeFloatLE(rec.values[i], off)
      off += 4
    }
  }
  return buf
}

/** Write an LDDF file atomically (temp file + rename). */
export function writeLddf(file: string, records: FeatureRecord[], dim: number): void {
  const bytes = encodeLddf(records, dim)
  const dir = path.dirname(file)
  fs.mkdirSync(dir, { recursive: true })
  const tmp = path.join(dir, `.${path.basename(file)}.${process.pid}.tmp`)
  fs.writeFileSync(tmp, bytes)
  fs.renameSync(tmp, file)
}

export function readLddf(file: string): { dim: number; records: FeatureRecord[] } {
  const buf = fs.readFileSync(file)
  if (buf.length < HEADER_BYTES || !buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${file}: not an LDDF file (bad magic)`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== LDDF_VERSION) {
    throw new Error(`${file}: unsupported LDDF version ${version}`)
  }
  const count = buf.readUInt32LE(8)
  const dim = buf.readUInt32LE(12)
  const recordBytes = 8 + 4 * dim
  if (buf.length !== HEADER_BYTES + count * recordBytes) {
    throw new Error(`${file}: truncated or oversized file (${buf.length} bytes)`)
  }
  const records: FeatureRecord[] = []
  const seen = new Set<string>()
  let off = HEADER_BYTES
  for (let i = 0; i < count; i++) {
    const box: Box = {
      x1: buf.readUInt16LE(off),
      y1: buf.readUInt16LE(off + 2),
      x2: buf.readUInt16LE(off + 4),
      y2: buf.readUInt16LE(off + 6),
    }
    off += 8
    const values = new Float32Array(dim)
    for (let j = 0; j < dim; j++) {
      values[j] = buf.readFloatLE(off)
      off += 4
    }
    const key = boxKey(box)
    if (seen.has(key)) throw new Error(`${file}: duplicate box (${key})`)
    seen.add(key)
    records.push({ box, values })
  }
  return { dim, records }
}
