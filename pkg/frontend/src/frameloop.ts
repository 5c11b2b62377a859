/**
 * Render scheduling: latest-state-wins consumption of the server stream,
 * one draw per animation frame, staleness tracking. The clock and the frame
 * scheduler are injected so tests can drive it synthetically.
 */

import { StateFrame } from "./protocol.js";

export const STALE_AFTER_S = 0.5;

export interface FrameLoopHooks {
  now(): number; // seconds
  requestFrame(cb: () => void): void;
  draw(latest: StateFrame | null, stale: boolean): void;
}

export class FrameLoop {
  private latest: StateFrame | null = null;
  private lastStateAt = -Infinity;
  private running = false;
  framesDrawn = 0;
  statesReceived = 0;

  constructor(private hooks: FrameLoopHooks) {}

  onState(frame: StateFrame): void {
    this.latest = frame; // newer always replaces older, never queues
    this.lastStateAt = this.hooks.now();
    this.statesReceived += 1;
  }

  get isStale(): boolean {
    return this.hooks.now() - this.lastStateAt > STALE_AFTER_S;
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    const tick = () => {
      if (!this.running) return;
      this.hooks.draw(this.latest, this.isStale);
      this.framesDrawn += 1;
      this.hooks.requestFrame(tick);
    };
    this.hooks.requestFrame(tick);
  }

  stop(): void {
    this.running = false;
  }
}
