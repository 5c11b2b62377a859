/**
 * Pointer-to-pen throttling: cap the message rate and keep timestamps
 * strictly monotone regardless of how the browser batches pointer events.
 */

export interface PenSample {
  t: number; // seconds, session clock
  xMm: number;
  yMm: number;
}

export class PointerThrottle {
  private readonly minInterval: number;
  private lastSent = -Infinity;
  private lastT = -Infinity;

  constructor(maxHz = 120) {
    this.minInterval = 1 / maxHz;
  }

  /** Returns the sample to send, or null when rate-limited. */
  accept(tSeconds: number, xMm: number, yMm: number): PenSample | null {
    if (tSeconds - this.lastSent < this.minInterval - 1e-9) {
      return null;
    }
    // monotone even if the event clock stalls or repeats
    const t = tSeconds <= this.lastT ? this.lastT + 1e-4 : tSeconds;
    this.lastSent = tSeconds;
    this.lastT = t;
    return { t, xMm, yMm };
  }
}
