/**
 * Wire protocol for the guidance session WebSocket (JSON text frames,
 * version field v: 1 on every message).
 */

export const PROTOCOL_VERSION = 1;

export type Strategy = "mpcc" | "mpc" | "ol";

export interface StartMessage {
  v: 1;
  type: "start";
  path: string | { closed: boolean; points_mm: [number, number][] };
  strategy: Strategy;
  weights?: Record<string, number>;
  assist: boolean;
  lockstep?: boolean;
}

export interface PenMessage {
  v: 1;
  type: "pen";
  t: number;
  x_mm: number;
  y_mm: number;
}

export interface StopMessage {
  v: 1;
  type: "stop";
}

export interface StateFrame {
  v: 1;
  type: "state";
  t: number;
  magnet_mm: [number, number];
  alpha: number;
  theta: number;
  s_theta_mm: [number, number];
  force_mN: [number, number];
  assisted_pen_mm: [number, number];
  cost: number;
  paused?: boolean;
}

export interface ErrorFrame {
  v: 1;
  type: "error";
  code: string;
  detail: string;
}

export interface StoppedFrame {
  v: 1;
  type: "stopped";
  trace: string | null;
}

export type ServerFrame = StateFrame | ErrorFrame | StoppedFrame;

export function buildStart(
  path: StartMessage["path"],
  strategy: Strategy,
  assist: boolean,
  weights?: Record<string, number>,
): StartMessage {
  const msg: StartMessage = { v: 1, type: "start", path, strategy, assist };
  if (weights && Object.keys(weights).length > 0) {
    msg.weights = weights;
  }
  return msg;
}

export function buildPen(t: number, xMm: number, yMm: number): PenMessage {
  return { v: 1, type: "pen", t, x_mm: xMm, y_mm: yMm };
}

const isPair = (p: unknown): p is [number, number] =>
  Array.isArray(p) && p.length === 2 && p.every((v) => typeof v === "number" && isFinite(v));

/** Parse and validate a server frame; null for anything malformed. */
export function parseServerFrame(text: string): ServerFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const obj = data as Record<string, unknown>;
  if (obj.v !== PROTOCOL_VERSION) return null;
  if (obj.type === "state") {
    if (
      typeof obj.t !== "number" ||
      typeof obj.alpha !== "number" ||
      typeof obj.theta !== "number" ||
      !isPair(obj.magnet_mm) ||
      !isPair(obj.s_theta_mm) ||
      !isPair(obj.force_mN) ||
      !isPair(obj.assisted_pen_mm)
    ) {
      return null;
    }
    return obj as unknown as StateFrame;
  }
  if (obj.type === "error") {
    if (typeof obj.code !== "string") return null;
    return obj as unknown as ErrorFrame;
  }
  if (obj.type === "stopped") {
    return obj as unknown as StoppedFrame;
  }
  return null;
}
