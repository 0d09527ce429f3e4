/**
 * Turn one `export-regions` output directory into LDDF feature tables: each
 * view directory holds `boxes.json` plus the region crops it names, and
 * yields one `<view_id>.lddf` with a record per region box plus one
 * whole-frame record for the full-view crop.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'
import * as tf from '@tensorflow/tfjs'
import { FEATURE_DIM, flattenActivation } from './flatten'
import { loadGrayPng, toInputTensor } from './image'
import { Box, FeatureRecord, writeLddf } from './lddf'
import { WeightSet, conv3Activations } from './model'

export interface RegionEntry {
  box: Box
  cropPath: string
}

export interface ViewListing {
  viewId: string
  entries: RegionEntry[]
}

/** Parse a view's boxes.json and resolve its crops, validating presence. */
export function readViewListing(viewDir: string): ViewListing {
  const listingPath = path.join(viewDir, 'boxes.json')
  if (!fs.existsSync(listingPath)) {
    throw new Error(`${viewDir}: no boxes.json listing`)
  }
  const raw = JSON.parse(fs.readFileSync(listingPath, 'utf8'))
  const viewId = typeof raw.view_id === 'string' ? raw.view_id : path.basename(viewDir)

  const entries: RegionEntry[] = []
  const add = (box: Box, crop: string) => {
    const cropPath = path.join(viewDir, crop)
    if (!fs.existsSync(cropPath)) {
      throw new Error(`${viewId}: box/crop mismatch, missing crop ${crop}`)
    }
    entries.push({ box, cropPath })
  }
  for (const r of raw.regions ?? []) {
    add({ x1: r.x1, y1: r.y1, x2: r.x2, y2: r.y2 }, r.crop)
  }
  if (raw.whole_image) {
    const [x1, y1, x2, y2] = raw.whole_image.box
    const whole: Box = { x1, y1, x2, y2 }
    // a proposal can coincide with the full frame; the record is already there
    const dup = entries.some(
      (e) => e.box.x1 === x1 && e.box.y1 === y1 && e.box.x2 === x2 && e.box.y2 === y2,
    )
    if (!dup) add(whole, raw.whole_image.crop)
  }
  return { viewId, entries }
}

/** Run the network over a view's crops and write its LDDF table. */
export async function exportView(
  viewDir: string,
  outFile: string,
  weights: WeightSet,
  batchSize = 8,
): Promise<{ viewId: string; count: number; dim: number }> {
  const listing = readViewListing(viewDir)
  const records: FeatureRecord[] = []
  for (let start = 0; start < listing.entries.length; start += batchSize) {
    const chunk = listing.entries.slice(start, start + batchSize)
    const batch = tf.tidy(() =>
      tf.stack(chunk.map((e) => toInputTensor(loadGrayPng(e.cropPath)))),
    ) as tf.Tensor4D
    const activations = conv3Activations(weights, batch)
    const data = (await activations.data()) as Float32Array
    batch.dispose()
    activations.dispose()
    chunk.forEach((entry, i) => {
      const hwc = data.subarray(i * FEATURE_DIM, (i + 1) * FEATURE_DIM)
      records.push({ box: entry.box, values: flattenActivation(new Float32Array(hwc)) })
    })
  }
  writeLddf(outFile, records, FEATURE_DIM)
  return { viewId: listing.viewId, count: records.length, dim: FEATURE_DIM }
}

function viewDirectories(regionsDir: string): string[] {
  return fs
    .readdirSync(regionsDir, { withFileTypes: true })
    .filter((d) => d.isDirectory() && fs.existsSync(path.join(regionsDir, d.name, 'boxes.json')))
    .map((d) => path.join(regionsDir, d.name))
    .sort()
}

/** Export every view directory under `regionsDir` into `outDir`. */
export async function exportRegions(
  regionsDir: string,
  outDir: string,
  weights: WeightSet,
  batchSize = 8,
): Promise<Array<{ viewId: string; count: number; dim: number; file: string }>> {
  const dirs = viewDirectories(regionsDir)
  if (dirs.length === 0) {
    throw new Error(`${regionsDir}: no view directories with boxes.json`)
  }
  const results = []
  for (const dir of dirs) {
    const viewId = path.basename(dir)
    const outFile = path.join(outDir, `${viewId}.lddf`)
    const res = await exportView(dir, outFile, weights, batchSize)
    results.push({ ...res, file: outFile })
  }
  return results
}
