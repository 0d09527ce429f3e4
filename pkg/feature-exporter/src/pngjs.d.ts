// Minimal typing for the pngjs sync API used here (upstream ships no types
// for the subset we need at this version).
declare module 'pngjs' {
  export class PNG {
    width: number
    height: number
    /** 8-bit RGBA, 4 bytes per pixel regardless of source color type. */
    data: Buffer
    static sync: {
      read(buffer: Buffer): PNG
      write(png: PNG): Buffer
    }
  }
}
