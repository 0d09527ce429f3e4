/**
 * The convolutional stack whose third convolution supplies the exported
 * features. Geometry from 227x227x3 input:
 *
 *     conv1 11x11x96  stride 4, valid -> 55x55x96,  relu, maxpool 3/2 -> 27x27
 *     conv2 5x5x256   stride 1, same  -> 27x27x256, relu, maxpool 3/2 -> 13x13
 *     conv3 3x3x384   stride 1, same  -> 13x13x384, relu
 *
 * Weights live in a local binary file created by `init-weights`; inference
 * refuses to run without one. Initialization is seeded and He-scaled, so a
 * given seed always produces the same network and therefore bit-identical
 * features for identical crops.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'
import * as tf from '@tensorflow/tfjs'
import { CONV3_CHANNELS, CONV3_COLS, CONV3_ROWS } from './flatten'
import { INPUT_SIZE } from './image'
import { gaussian, mulberry32 } from './prng'

interface ConvSpec {
  name: string
  kernel: [number, number, number, number]
  stride: number
  pad: 'valid' | 'same'
  pool: boolean
}

const CONV_SPECS: ConvSpec[] = [
  { name: 'conv1', kernel: [11, 11, 3, 96], stride: 4, pad: 'valid', pool: true },
  { name: 'conv2', kernel: [5, 5, 96, 256], stride: 1, pad: 'same', pool: true },
  { name: 'conv3', kernel: [3, 3, 256, 384], stride: 1, pad: 'same', pool: false },
]

const WEIGHTS_MAGIC = Buffer.from('CNNW', 'ascii')
const WEIGHTS_VERSION = 1

export interface WeightSet {
  /** One [kh, kw, cin, cout] kernel per conv layer, in network order. */
  kernels: Float32Array[]
  /** One per-output-channel bias vector per conv layer. */
  biases: Float32Array[]
}

/** Seeded He-scaled initialization: kernel std = sqrt(2 / fan_in), zero bias. */
export function initWeights(seed: number): WeightSet {
  const normal = gaussian(mulberry32(seed))
  const kernels: Float32Array[] = []
  const biases: Float32Array[] = []
  for (const spec of CONV_SPECS) {
    const [kh, kw, cin, cout] = spec.kernel
    const std = Math.sqrt(2 / (kh * kw * cin))
    const k = new Float32Array(kh * kw * cin * cout)
    for (let i = 0; i < k.length; i++) k[i] = Math.fround(normal() * std)
    kernels.push(k)
    biases.push(new Float32Array(cout))
  }
  return { kernels, biases }
}

function tensorEntries(ws: WeightSet): Array<{ dims: number[]; data: Float32Array }> {
  const out: Array<{ dims: number[]; data: Float32Array }> = []
  CONV_SPECS.forEach((spec, i) => {
    out.push({ dims: [...spec.kernel], data: ws.kernels[i] })
    out.push({ dims: [spec.kernel[3]], data: ws.biases[i] })
  })
  return out
}

export function saveWeights(file: string, ws: WeightSet): void {
  const entries = tensorEntries(ws)
  let size = 12
  for (const e of entries) size += 4 + 4 * e.dims.length + 4 * e.data.length
  const buf = Buffer.alloc(size)
  WEIGHTS_MAGIC.copy(buf, 0)
  buf.writeUInt32LE(WEIGHTS_VERSION, 4)
  buf.writeUInt32LE(entries.length, 8)
  let off = 12
  for (const e of entries) {
    buf.writeUInt32LE(e.dims.length, off)
    off += 4
    for (const d of e.dims) {
      buf.writeUInt32LE(d, off)
      off += 4
    }
    for (let i = 0; i < e.data.length; i++) {
      buf.writeFloatLE(e.data[i], off)
      off += 4
    }
  }
  fs.mkdirSync(path.dirname(file), { recursive: true })
  const tmp = path.join(path.dirname(file), `.${path.basename(file)}.${process.pid}.tmp`)
  fs.writeFileSync(tmp, buf)
  fs.renameSync(tmp, file)
}

export function loadWeights(file: string): WeightSet {
  if (!fs.existsSync(file)) {
    throw new Error(`weights file not found: ${file} (run init-weights first)`)
  }
  const buf = fs.readFileSync(file)
  if (buf.length < 12 || !buf.subarray(0, 4).equals(WEIGHTS_MAGIC)) {
    throw new Error(`${file}: not a weights file (bad magic)`)
  }
  if (buf.readUInt32LE(4) !== WEIGHTS_VERSION) {
    throw new Error(`${file}: unsupported weights version`)
  }
  const count = buf.readUInt32LE(8)
  if (count !== CONV_SPECS.length * 2) {
    throw new Error(`${file}: expected ${CONV_SPECS.length * 2} tensors, found ${count}`)
  }
  let off = 12
  const readTensor = (wantDims: number[]): Float32Array => {
    const rank = buf.readUInt32LE(off)
    off += 4
    const dims: number[] = []
    for (let i = 0; i < rank; i++) {
      dims.push(buf.readUInt32LE(off))
      off += 4
    }
    if (dims.length !== wantDims.length || dims.some((d, i) => d !== wantDims[i])) {
      throw new Error(`${file}: tensor shape [${dims}] does not match architecture [${wantDims}]`)
    }
    const n = dims.reduce((a, b) => a * b, 1)
    if (off + 4 * n > buf.length) throw new Error(`${file}: truncated weights file`)
    const data = new Float32Array(n)
    for (let i = 0; i < n; i++) {
      data[i] = buf.readFloatLE(off)
      off += 4
    }
    return data
  }
  const kernels: Float32Array[] = []
  const biases: Float32Array[] = []
  for (const spec of CONV_SPECS) {
    kernels.push(readTensor([...spec.kernel]))
    biases.push(readTensor([spec.kernel[3]]))
  }
  if (off !== buf.length) throw new Error(`${file}: trailing bytes in weights file`)
  return { kernels, biases }
}

/** Run the stack on a [n, 227, 227, 3] batch; returns [n, 13, 13, 384]. */
export function conv3Activations(ws: WeightSet, batch: tf.Tensor4D): tf.Tensor4D {
  if (batch.shape[1] !== INPUT_SIZE || batch.shape[2] !== INPUT_SIZE || batch.shape[3] !== 3) {
    throw new Error(`expected [n, ${INPUT_SIZE}, ${INPUT_SIZE}, 3] input, got [${batch.shape}]`)
  }
  return tf.tidy(() => {
    let t = batch
    CONV_SPECS.forEach((spec, i) => {
      const kernel = tf.tensor4d(ws.kernels[i], spec.kernel)
      const bias = tf.tensor1d(ws.biases[i])
      t = tf.relu(tf.add(tf.conv2d(t, kernel, spec.stride, spec.pad), bias))
      if (spec.pool) t = tf.maxPool(t as tf.Tensor4D, 3, 2, 'valid')
    })
    const out = t as tf.Tensor4D
    const [, oh, ow, oc] = out.shape
    if (oh !== CONV3_ROWS || ow !== CONV3_COLS || oc !== CONV3_CHANNELS) {
      throw new Error(`unexpected activation shape [${out.shape}]`)
    }
    return out
  })
}
