/**
 * Third-conv activation geometry and the fixed flattening order.
 *
 * The network emits activations in HWC order (row, column, channel). The
 * on-disk feature order is (channel, row, column):
 *
 *     index = channel * 13 * 13 + row * 13 + column
 *
 * so one channel's full 13x13 map occupies a contiguous run of the vector.
 */

export const CONV3_ROWS = 13
export const CONV3_COLS = 13
export const CONV3_CHANNELS = 384
export const FEATURE_DIM = CONV3_ROWS * CONV3_COLS * CONV3_CHANNELS // 64896

export function flatIndex(channel: number, row: number, col: number): number {
  if (channel < 0 || channel >= CONV3_CHANNELS || row < 0 || row >= CONV3_ROWS || col < 0 || col >= CONV3_COLS) {
    throw new Error(`activation index out of range: channel=${channel} row=${row} col=${col}`)
  }
  return channel * CONV3_ROWS * CONV3_COLS + row * CONV3_COLS + col
}

/** Reorder one crop's HWC activation buffer into the flat CHW feature. */
export function flattenActivation(hwc: Float32Array): Float32Array {
  if (hwc.length !== FEATURE_DIM) {
    throw new Error(`expected ${FEATURE_DIM} activation values, got ${hwc.length}`)
  }
  const plane = CONV3_ROWS * CONV3_COLS
  const out = new Float32Array(FEATURE_DIM)
  let src = 0
  for (let r = 0; r < CONV3_ROWS; r++) {
    const rowBase = r * CONV3_COLS
    for (let c = 0; c < CONV3_COLS; c++) {
      const pos = rowBase + c
      for (let ch = 0; ch < CONV3_CHANNELS; ch++) {
        out[ch * plane + pos] = hwc[src++]
      }
    }
  }
  return out
}
