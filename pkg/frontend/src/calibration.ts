/**
 * Workspace <-> canvas mapping.
 *
 * The drawing workspace is a fixed millimeter rectangle; the canvas is
 * whatever size the layout gives us. The view is the aspect-preserving fit
 * with a margin, so a pointer position converts to workspace millimeters and
 * back with sub-pixel round-trip error at any canvas size.
 */

export const WORKSPACE_MM = { width: 230, height: 130 };

export interface View {
  scale: number; // px per mm
  offsetX: number; // px of the workspace origin
  offsetY: number;
  canvasWidth: number;
  canvasHeight: number;
}

export function fitView(canvasWidth: number, canvasHeight: number, marginPx?: number): View {
  // margin scales with the canvas so a proportional resize is an exact
  // similarity transform (no coordinate jumps mid-stroke)
  const margin = marginPx ?? 0.025 * Math.min(canvasWidth, canvasHeight);
  const usableW = Math.max(canvasWidth - 2 * margin, 1);
  const usableH = Math.max(canvasHeight - 2 * margin, 1);
  const scale = Math.min(usableW / WORKSPACE_MM.width, usableH / WORKSPACE_MM.height);
  const offsetX = (canvasWidth - scale * WORKSPACE_MM.width) / 2;
  const offsetY = (canvasHeight - scale * WORKSPACE_MM.height) / 2;
  return { scale, offsetX, offsetY, canvasWidth, canvasHeight };
}

export function mmToPx(view: View, xMm: number, yMm: number): [number, number] {
  // y grows upward in the workspace, downward on the canvas
  return [
    view.offsetX + xMm * view.scale,
    view.offsetY + (WORKSPACE_MM.height - yMm) * view.scale,
  ];
}

export function pxToMm(view: View, xPx: number, yPx: number): [number, number] {
  const x = (xPx - view.offsetX) / view.scale;
  const y = WORKSPACE_MM.height - (yPx - view.offsetY) / view.scale;
  return [clamp(x, 0, WORKSPACE_MM.width), clamp(y, 0, WORKSPACE_MM.height)];
}

/** Raw inverse without the workspace clamp (for round-trip checks). */
export function pxToMmUnclamped(view: View, xPx: number, yPx: number): [number, number] {
  const x = (xPx - view.offsetX) / view.scale;
  const y = WORKSPACE_MM.height - (yPx - view.offsetY) / view.scale;
  return [x, y];
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}
