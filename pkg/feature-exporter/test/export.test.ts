import { spawnSync } from 'node:child_process'
import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'
import { exportRegions, exportView, readViewListing } from '../src/export'
import { FEATURE_DIM } from '../src/flatten'
import { readLddf } from '../src/lddf'
import { WeightSet, initWeights } from '../src/model'

let tmpDir: string
let regionsDir: string
let weights: WeightSet

function runCore(args: string[]): void {
  const res = spawnSync('python3', ['-m', 'placerec.cli', ...args], { encoding: 'utf8' })
  if (res.status !== 0) throw new Error(`core CLI failed: ${res.stderr}`)
}

/** Load with the core and report count, dims, and the box set. */
function coreLoad(file: string): { count: number; dims: number[]; boxes: number[][] } {
  const script = `
import json, sys
from placerec.features import load_features
feats = load_features(sys.argv[1])
print(json.dumps({
    "count": len(feats),
    "dims": sorted({fv.dim for fv in feats.values()}),
    "boxes": sorted(box.as_tuple() for box in feats),
}))
`
  const res = spawnSync('python3', ['-c', script, file], { encoding: 'utf8' })
  if (res.status !== 0) throw new Error(`core load failed: ${res.stderr}`)
  return JSON.parse(res.stdout)
}

beforeAll(() => {
  tmpDir = fs.mkdtempSync(path.join(os.tmpdir(), 'export-'))
  regionsDir = path.join(tmpDir, 'regions')
  const dataDir = path.join(tmpDir, 'data')
  runCore(['synth', '--out', dataDir, '--locations', '1', '--seed', '3'])
  runCore([
    'export-regions', path.join(dataDir, 'manifest.json'),
    '--out', regionsDir,
    '--budgets', '1,2,1',
    '--width', '320', '--height', '240', '--section-width', '160',
  ])
  weights = initWeights(7)
})

afterAll(() => {
  fs.rmSync(tmpDir, { recursive: true, force: true })
})

describe('exportRegions', () => {
  it('writes one table per view that the core loads with the right boxes', async () => {
    const outDir = path.join(tmpDir, 'features')
    const results = await exportRegions(regionsDir, outDir, weights)
    const viewDirs = fs.readdirSync(regionsDir).sort()
    expect(results.map((r) => r.viewId)).toEqual(viewDirs)

    for (const r of results) {
      const listing = JSON.parse(
        fs.readFileSync(path.join(regionsDir, r.viewId, 'boxes.json'), 'utf8'),
      )
      expect(r.count).toBe(listing.regions.length + 1)
      expect(r.dim).toBe(FEATURE_DIM)

      const loaded = coreLoad(r.file)
      expect(loaded.count).toBe(r.count)
      expect(loaded.dims).toEqual([FEATURE_DIM])
      const wantBoxes = listing.regions
        .map((b: { x1: number; y1: number; x2: number; y2: number }) => [b.x1, b.y1, b.x2, b.y2])
        .concat([listing.whole_image.box])
        .sort((a: number[], b: number[]) => a[0] - b[0] || a[1] - b[1] || a[2] - b[2] || a[3] - b[3])
      expect(loaded.boxes).toEqual(wantBoxes)
    }
  })

  it('identical crops and weights give byte-identical tables', async () => {
    const viewDir = path.join(regionsDir, fs.readdirSync(regionsDir).sort()[0])
    const out1 = path.join(tmpDir, 'again1.lddf')
    const out2 = path.join(tmpDir, 'again2.lddf')
    await exportView(viewDir, out1, weights)
    await exportView(viewDir, out2, weights)
    expect(fs.readFileSync(out1)).toEqual(fs.readFileSync(out2))
    const back = readLddf(out1)
    expect(back.dim).toBe(FEATURE_DIM)
    expect(back.records.every((rec) => rec.values.length === FEATURE_DIM)).toBe(true)
  })

  it('a listed box without its crop file is refused', async () => {
    const src = path.join(regionsDir, fs.readdirSync(regionsDir).sort()[0])
    const broken = path.join(tmpDir, 'broken-view')
    fs.cpSync(src, broken, { recursive: true })
    fs.rmSync(path.join(broken, 'region_000.png'))
    expect(() => readViewListing(broken)).toThrow(/mismatch/)
    await expect(exportView(broken, path.join(tmpDir, 'x.lddf'), weights)).rejects.toThrow(
      /mismatch/,
    )
  })

  it('a view with no boxes yields a valid empty table', async () => {
    const emptyDir = path.join(tmpDir, 'empty-view')
    fs.mkdirSync(emptyDir, { recursive: true })
    fs.writeFileSync(
      path.join(emptyDir, 'boxes.json'),
      JSON.stringify({ view_id: 'v_empty', regions: [] }),
    )
    const out = path.join(tmpDir, 'empty.lddf')
    const res = await exportView(emptyDir, out, weights)
    expect(res.count).toBe(0)
    const loaded = coreLoad(out)
    expect(loaded.count).toBe(0)
  })

  it('a region equal to the full frame is not written twice', () => {
    const dupDir = path.join(tmpDir, 'dup-view')
    fs.mkdirSync(dupDir, { recursive: true })
    const src = path.join(regionsDir, fs.readdirSync(regionsDir).sort()[0])
    fs.copyFileSync(path.join(src, 'full.png'), path.join(dupDir, 'full.png'))
    fs.writeFileSync(
      path.join(dupDir, 'boxes.json'),
      JSON.stringify({
        view_id: 'v_dup',
        regions: [{ x1: 0, y1: 0, x2: 320, y2: 240, crop: 'full.png' }],
        whole_image: { box: [0, 0, 320, 240], crop: 'full.png' },
      }),
    )
    const listing = readViewListing(dupDir)
    expect(listing.entries.length).toBe(1)
  })
})
