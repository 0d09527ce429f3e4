/**
 * Crop loading and network input preparation. Region crops arrive as 8-bit
 * grayscale PNGs; the network wants 227x227x3. Crops are stretched to the
 * square input (no letterboxing) and the gray channel is replicated three
 * times.
 */

import * as fs from 'node:fs'
import * as tf from '@tensorflow/tfjs'
import { PNG } from 'pngjs'

export const INPUT_SIZE = 227

export interface GrayImage {
  width: number
  height: number
  /** Row-major intensities in [0, 1]. */
  data: Float32Array
}

export function loadGrayPng(file: string): GrayImage {
  const png = PNG.sync.read(fs.readFileSync(file))
  const n = png.width * png.height
  const out = new Float32Array(n)
  for (let i = 0; i < n; i++) {
    const o = i * 4
    // pngjs expands every color type to RGBA; averaging also tolerates
    // color inputs even though the pipeline's crops are grayscale
    out[i] = (png.data[o] + png.data[o + 1] + png.data[o + 2]) / (3 * 255)
  }
  return { width: png.width, height: png.height, data: out }
}

/** Stretch-resize to the network input square and replicate to 3 channels. */
export function toInputTensor(img: GrayImage): tf.Tensor3D {
  return tf.tidy(() => {
    const t = tf.tensor3d(img.data, [img.height, img.width, 1])
    const resized = tf.image.resizeBilinear(t, [INPUT_SIZE, INPUT_SIZE])
    return tf.tile(resized, [1, 1, 3]) as tf.Tensor3D
  })
}
