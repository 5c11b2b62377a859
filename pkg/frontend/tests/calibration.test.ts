import { describe, expect, it } from "vitest";
import { fitView, mmToPx, pxToMm, pxToMmUnclamped, WORKSPACE_MM } from "../src/calibration.js";

describe("workspace calibration", () => {
  it("maps the canvas center to the workspace center within half a millimeter", () => {
    const view = fitView(920, 560);
    const [xMm, yMm] = pxToMm(view, 460, 280);
    expect(Math.abs(xMm - WORKSPACE_MM.width / 2)).toBeLessThan(0.5);
    expect(Math.abs(yMm - WORKSPACE_MM.height / 2)).toBeLessThan(0.5);
  });

  it("round-trips pointer -> mm -> px within one pixel at any zoom", () => {
    for (const [w, h] of [[320, 200], [920, 560], [1920, 1080], [500, 900]]) {
      const view = fitView(w, h);
      for (let i = 0; i < 200; i++) {
        const px = 16 + (w - 32) * ((i * 37) % 199) / 199;
        const py = 16 + (h - 32) * ((i * 53) % 211) / 211;
        const [xMm, yMm] = pxToMmUnclamped(view, px, py);
        const [bx, by] = mmToPx(view, xMm, yMm);
        expect(Math.abs(bx - px)).toBeLessThanOrEqual(1);
        expect(Math.abs(by - py)).toBeLessThanOrEqual(1);
      }
    }
  });

  it("clamps out-of-canvas pointers to the workspace edge", () => {
    const view = fitView(920, 560);
    const [xMm, yMm] = pxToMm(view, -50, -50);
    expect(xMm).toBeGreaterThanOrEqual(0);
    expect(yMm).toBeLessThanOrEqual(WORKSPACE_MM.height);
    const [xMm2] = pxToMm(view, 5000, 300);
    expect(xMm2).toBeLessThanOrEqual(WORKSPACE_MM.width);
  });

  it("keeps mapping consistent across a proportional resize", () => {
    const a = fitView(920, 560);
    const b = fitView(1840, 1120);
    for (let i = 0; i < 50; i++) {
      const xMm = (WORKSPACE_MM.width * i) / 49;
      const yMm = (WORKSPACE_MM.height * ((i * 7) % 50)) / 49;
      const [ax, ay] = mmToPx(a, xMm, yMm);
      // the same canvas-relative position in the resized view
      const [backX, backY] = pxToMm(b, ax * 2, ay * 2);
      expect(Math.abs(backX - xMm)).toBeLessThan(1); // < 1 mm jump
      expect(Math.abs(backY - yMm)).toBeLessThan(1);
    }
  });

  it("preserves aspect ratio (same px-per-mm on both axes by construction)", () => {
    const view = fitView(1000, 300);
    const [x0] = mmToPx(view, 0, 0);
    const [x1] = mmToPx(view, 10, 0);
    const [, y0] = mmToPx(view, 0, 0);
    const [, y1] = mmToPx(view, 0, 10);
    expect(Math.abs((x1 - x0) - (y0 - y1))).toBeLessThan(1e-9);
  });
});
