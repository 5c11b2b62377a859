import { describe, expect, it } from "vitest";
import { PointerThrottle } from "../src/throttle.js";

describe("pointer throttling", () => {
  it("caps a 1000-event synthetic drag at 120 messages per second", () => {
    const throttle = new PointerThrottle(120);
    const sent = [];
    for (let i = 0; i < 1000; i++) {
      const t = i * 0.002; // 500 Hz pointer events over 2 s
      const s = throttle.accept(t, i * 0.1, 50);
      if (s) sent.push(s);
    }
    expect(sent.length).toBeLessThanOrEqual(120 * 2 + 1);
    // event quantization makes the effective rate ~100 Hz here
    expect(sent.length).toBeGreaterThanOrEqual(150);
  });

  it("keeps timestamps strictly monotone even when the clock repeats", () => {
    const throttle = new PointerThrottle(120);
    const ts: number[] = [];
    const clock = [0.0, 0.05, 0.05, 0.05, 0.1, 0.09, 0.2, 0.3];
    for (const t of clock) {
      const s = throttle.accept(t, 0, 0);
      if (s) ts.push(s.t);
    }
    for (let i = 1; i < ts.length; i++) {
      expect(ts[i]).toBeGreaterThan(ts[i - 1]);
    }
  });

  it("passes everything through when slower than the cap", () => {
    const throttle = new PointerThrottle(120);
    let sent = 0;
    for (let i = 0; i < 100; i++) {
      if (throttle.accept(i * 0.02, 0, 0)) sent++; // 50 Hz
    }
    expect(sent).toBe(100);
  });
});
