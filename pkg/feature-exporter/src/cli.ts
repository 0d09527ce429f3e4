#!/usr/bin/env node
/**
 * feature-exporter init-weights --out FILE [--seed N]
 * feature-exporter export --regions DIR --weights FILE --out DIR [--batch N]
 */

import { parseArgs } from 'node:util'
import { exportRegions } from './export'
import { initWeights, loadWeights, saveWeights } from './model'

function usage(code: number): never {
  console.error(
    [
      'usage:',
      '  feature-exporter init-weights --out FILE [--seed N]',
      '  feature-exporter export --regions DIR --weights FILE --out DIR [--batch N]',
    ].join('\n'),
  )
  process.exit(code)
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2)
  if (!command || command === '--help' || command === '-h') usage(command ? 0 : 2)

  if (command === 'init-weights') {
    const { values } = parseArgs({
      args: rest,
      options: { out: { type: 'string' }, seed: { type: 'string', default: '7' } },
    })
    if (!values.out) usage(2)
    const seed = Number(values.seed)
    if (!Number.isInteger(seed) || seed < 0) {
      throw new Error(`--seed must be a non-negative integer, got ${values.seed}`)
    }
    saveWeights(values.out, initWeights(seed))
    console.log(`wrote seeded network weights to ${values.out}`)
    return
  }

  if (command === 'export') {
    const { values } = parseArgs({
      args: rest,
      options: {
        regions: { type: 'string' },
        weights: { type: 'string' },
        out: { type: 'string' },
        batch: { type: 'string', default: '8' },
      },
    })
    if (!values.regions || !values.weights || !values.out) usage(2)
    const batch = Number(values.batch)
    if (!Number.isInteger(batch) || batch < 1) {
      throw new Error(`--batch must be a positive integer, got ${values.batch}`)
    }
    const weights = loadWeights(values.weights)
    const results = await exportRegions(values.regions, values.out, weights, batch)
    for (const r of results) {
      console.log(`${r.viewId}: ${r.count} records, dim ${r.dim} -> ${r.file}`)
    }
    return
  }

  usage(2)
}

main().catch((err) => {
  console.error(`error: ${err instanceof Error ? err.message : err}`)
  process.exit(1)
})
