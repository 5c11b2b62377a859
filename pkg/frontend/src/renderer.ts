/**
 * Canvas renderer. Pure: takes the view state and draws onto anything that
 * implements the small Draw2D surface, so tests can record draw ops and
 * snapshot them instead of rasterizing.
 */

import { View, WORKSPACE_MM, mmToPx } from "./calibration.js";
import { StateFrame } from "./protocol.js";

export interface Draw2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  rect(x: number, y: number, w: number, h: number): void;
  stroke(): void;
  fill(): void;
  setLineDash(segments: number[]): void;
  fillText(text: string, x: number, y: number): void;
  set lineWidth(w: number);
  set strokeStyle(s: string);
  set fillStyle(s: string);
  set font(f: string);
}

export interface Scene {
  path: [number, number][]; // reference polyline, workspace mm
  pathLengthM: number;
  rawStroke: [number, number][]; // pointer samples, mm
  assistedStroke: [number, number][]; // server-computed assisted pen, mm
  latest: StateFrame | null;
  stale: boolean; // no state frame for > 500 ms
  connected: boolean;
}

export const FORCE_SCALE_PX_PER_MN = 0.12; // arrow length per mN
const COMPLETION_FRACTION = 0.995;

function drawPolyline(ctx: Draw2D, view: View, pts: [number, number][]) {
  if (pts.length < 2) return;
  ctx.beginPath();
  const [x0, y0] = mmToPx(view, pts[0][0], pts[0][1]);
  ctx.moveTo(x0, y0);
  for (let i = 1; i < pts.length; i++) {
    const [x, y] = mmToPx(view, pts[i][0], pts[i][1]);
    ctx.lineTo(x, y);
  }
  ctx.stroke();
}

function drawDot(ctx: Draw2D, view: View, xMm: number, yMm: number, rPx: number) {
  const [x, y] = mmToPx(view, xMm, yMm);
  ctx.beginPath();
  ctx.arc(x, y, rPx, 0, 2 * Math.PI);
  ctx.fill();
}

export function render(ctx: Draw2D, view: View, scene: Scene): void {
  ctx.clearRect(0, 0, view.canvasWidth, view.canvasHeight);

  // workspace frame
  ctx.setLineDash([]);
  ctx.strokeStyle = "#888";
  ctx.lineWidth = 1;
  const [ox, oy] = mmToPx(view, 0, WORKSPACE_MM.height);
  ctx.beginPath();
  ctx.rect(ox, oy, WORKSPACE_MM.width * view.scale, WORKSPACE_MM.height * view.scale);
  ctx.stroke();

  // reference path, dotted
  ctx.setLineDash([4, 4]);
  ctx.strokeStyle = "#555";
  ctx.lineWidth = 1.5;
  drawPolyline(ctx, view, scene.path);
  ctx.setLineDash([]);

  // raw stroke (the user's hand) and assisted stroke side by side
  ctx.strokeStyle = "#3366cc";
  ctx.lineWidth = 2;
  drawPolyline(ctx, view, scene.rawStroke);
  ctx.strokeStyle = "#e08020";
  ctx.lineWidth = 2;
  drawPolyline(ctx, view, scene.assistedStroke);

  const s = scene.latest;
  if (s) {
    // setpoint marker
    ctx.fillStyle = "#22aa55";
    drawDot(ctx, view, s.s_theta_mm[0], s.s_theta_mm[1], 4);

    // magnet glyph, ring scaled by intensity
    ctx.fillStyle = "#cc3344";
    drawDot(ctx, view, s.magnet_mm[0], s.magnet_mm[1], 5);
    ctx.strokeStyle = "#cc3344";
    ctx.lineWidth = 1.5;
    const [mx, my] = mmToPx(view, s.magnet_mm[0], s.magnet_mm[1]);
    ctx.beginPath();
    ctx.arc(mx, my, 5 + 8 * s.alpha, 0, 2 * Math.PI);
    ctx.stroke();

    // force arrow from the pen, only when there is force to show
    const fmag = Math.hypot(s.force_mN[0], s.force_mN[1]);
    if (fmag > 0) {
      const pen = scene.rawStroke.length
        ? scene.rawStroke[scene.rawStroke.length - 1]
        : s.assisted_pen_mm;
      const [px, py] = mmToPx(view, pen[0], pen[1]);
      const dx = s.force_mN[0] * FORCE_SCALE_PX_PER_MN;
      const dy = -s.force_mN[1] * FORCE_SCALE_PX_PER_MN;
      ctx.strokeStyle = "#aa22aa";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(px, py);
      ctx.lineTo(px + dx, py + dy);
      const ang = Math.atan2(dy, dx);
      ctx.moveTo(px + dx, py + dy);
      ctx.lineTo(px + dx - 7 * Math.cos(ang - 0.45), py + dy - 7 * Math.sin(ang - 0.45));
      ctx.moveTo(px + dx, py + dy);
      ctx.lineTo(px + dx - 7 * Math.cos(ang + 0.45), py + dy - 7 * Math.sin(ang + 0.45));
      ctx.stroke();
    }

    // progress readout / completion banner
    ctx.fillStyle = "#222";
    ctx.font = "13px sans-serif";
    const frac = scene.pathLengthM > 0 ? s.theta / scene.pathLengthM : 0;
    if (frac >= COMPLETION_FRACTION) {
      ctx.font = "20px sans-serif";
      ctx.fillText("path complete", view.canvasWidth / 2 - 60, 30);
    } else {
      ctx.fillText(`progress ${(100 * frac).toFixed(0)}%`, 10, 18);
    }
    if (s.paused) {
      ctx.fillStyle = "#aa6600";
      ctx.fillText("paused (no pen input)", 10, 36);
    }
  }

  if (scene.stale) {
    ctx.fillStyle = "#bb2222";
    ctx.font = "13px sans-serif";
    ctx.fillText("state stale", view.canvasWidth - 90, 18);
  }
  if (!scene.connected) {
    ctx.fillStyle = "#bb2222";
    ctx.font = "13px sans-serif";
    ctx.fillText("disconnected", view.canvasWidth - 100, 36);
  }
}

/** Draw-op recorder implementing Draw2D, for snapshot tests. */
export class RecordingContext implements Draw2D {
  ops: (string | number)[][] = [];
  clearRect(x: number, y: number, w: number, h: number) {
    this.ops.push(["clearRect", r(x), r(y), r(w), r(h)]);
  }
  beginPath() {
    this.ops.push(["beginPath"]);
  }
  moveTo(x: number, y: number) {
    this.ops.push(["moveTo", r(x), r(y)]);
  }
  lineTo(x: number, y: number) {
    this.ops.push(["lineTo", r(x), r(y)]);
  }
  arc(x: number, y: number, radius: number, a0: number, a1: number) {
    this.ops.push(["arc", r(x), r(y), r(radius), r(a0), r(a1)]);
  }
  rect(x: number, y: number, w: number, h: number) {
    this.ops.push(["rect", r(x), r(y), r(w), r(h)]);
  }
  stroke() {
    this.ops.push(["stroke"]);
  }
  fill() {
    this.ops.push(["fill"]);
  }
  setLineDash(segments: number[]) {
    this.ops.push(["setLineDash", ...segments]);
  }
  fillText(text: string, x: number, y: number) {
    this.ops.push(["fillText", text, r(x), r(y)]);
  }
  set lineWidth(w: number) {
    this.ops.push(["lineWidth", w]);
  }
  set strokeStyle(s: string) {
    this.ops.push(["strokeStyle", s]);
  }
  set fillStyle(s: string) {
    this.ops.push(["fillStyle", s]);
  }
  set font(f: string) {
    this.ops.push(["font", f]);
  }
}

function r(v: number): number {
  return Math.round(v * 100) / 100;
}
