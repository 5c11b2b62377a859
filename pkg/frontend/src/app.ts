/**
 * DOM entry point: canvas, pointer capture, WebSocket session, controls.
 *
 * All guidance logic stays server-side; this file only converts pointer
 * events to pen messages and renders the state stream. Strategy and weight
 * changes restart the session with a fresh start message, so every session
 * has an immutable configuration and replays cleanly.
 */

import { fitView, pxToMm, View } from "./calibration.js";
import { FrameLoop } from "./frameloop.js";
import { buildPen, buildStart, parseServerFrame, StateFrame, Strategy } from "./protocol.js";
import { render, Scene } from "./renderer.js";
import { PointerThrottle } from "./throttle.js";

const SHAPES = ["circle", "ellipse", "line", "spiral", "sinusoid"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function main(): void {
  const canvas = el<HTMLCanvasElement>("view");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  const status = el<HTMLSpanElement>("status");
  const shapeSel = el<HTMLSelectElement>("shape");
  const strategySel = el<HTMLSelectElement>("strategy");
  const assistBox = el<HTMLInputElement>("assist");
  const stiffness = el<HTMLInputElement>("stiffness");
  const restartBtn = el<HTMLButtonElement>("restart");

  for (const s of SHAPES) {
    const opt = document.createElement("option");
    opt.value = s;
    opt.textContent = s;
    shapeSel.appendChild(opt);
  }

  let view: View = fitView(canvas.width, canvas.height);
  const scene: Scene = {
    path: [],
    pathLengthM: 0,
    rawStroke: [],
    assistedStroke: [],
    latest: null,
    stale: true,
    connected: false,
  };

  function resize(): void {
    const rect = canvas.getBoundingClientRect();
    canvas.width = Math.max(rect.width, 200);
    canvas.height = Math.max(rect.height, 150);
    view = fitView(canvas.width, canvas.height);
  }
  window.addEventListener("resize", resize);
  resize();

  const loop = new FrameLoop({
    now: () => performance.now() / 1000,
    requestFrame: (cb) => requestAnimationFrame(cb),
    draw: (latest, stale) => {
      scene.latest = latest;
      scene.stale = stale;
      render(ctx as unknown as Parameters<typeof render>[0], view, scene);
    },
  });
  loop.start();

  let ws: WebSocket | null = null;
  let throttle = new PointerThrottle(120);
  let sessionT0 = 0;
  let lastPointerMm: [number, number] | null = null;

  async function loadPathPreview(shape: string): Promise<void> {
    scene.path = [];
    scene.pathLengthM = 0;
    try {
      const res = await fetch(`/paths/${shape}`);
      if (!res.ok) return;
      const data = (await res.json()) as { points_mm: [number, number][]; length_m: number };
      scene.path = data.points_mm;
      scene.pathLengthM = data.length_m;
    } catch {
      // preview only; the session works without it
    }
  }

  function startSession(): void {
    if (ws) {
      ws.send(JSON.stringify({ v: 1, type: "stop" }));
      ws.close();
    }
    scene.rawStroke = [];
    scene.assistedStroke = [];
    scene.latest = null;
    lastPointerMm = null;
    throttle = new PointerThrottle(120);
    sessionT0 = performance.now() / 1000;

    const url = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/session`;
    ws = new WebSocket(url);
    const strategy = strategySel.value as Strategy;
    const weights: Record<string, number> = {};
    const c = Number(stiffness.value);
    if (isFinite(c) && c > 0) weights.c = c;
    ws.onopen = () => {
      scene.connected = true;
      status.textContent = "connected";
      ws?.send(
        JSON.stringify(buildStart(shapeSel.value, strategy, assistBox.checked, weights)),
      );
    };
    ws.onclose = () => {
      scene.connected = false;
      status.textContent = "disconnected";
    };
    ws.onmessage = (ev) => {
      const frame = parseServerFrame(String(ev.data));
      if (!frame) return;
      if (frame.type === "state") {
        loop.onState(frame as StateFrame);
        // both strokes sampled once per state frame: equal counts by construction
        const raw = lastPointerMm ?? [frame.assisted_pen_mm[0], frame.assisted_pen_mm[1]];
        scene.rawStroke.push([raw[0], raw[1]]);
        scene.assistedStroke.push([frame.assisted_pen_mm[0], frame.assisted_pen_mm[1]]);
      } else if (frame.type === "error") {
        status.textContent = `error: ${frame.code}`;
      }
    };
    void loadPathPreview(shapeSel.value);
  }

  function onPointer(ev: PointerEvent): void {
    if (!ws || ws.readyState !== WebSocket.OPEN) return;
    if (ev.buttons === 0 && ev.type === "pointermove") return;
    const rect = canvas.getBoundingClientRect();
    const [xMm, yMm] = pxToMm(view, ev.clientX - rect.left, ev.clientY - rect.top);
    lastPointerMm = [xMm, yMm];
    const sample = throttle.accept(performance.now() / 1000 - sessionT0, xMm, yMm);
    if (!sample) return;
    ws.send(JSON.stringify(buildPen(sample.t, sample.xMm, sample.yMm)));
  }
  canvas.addEventListener("pointerdown", onPointer);
  canvas.addEventListener("pointermove", onPointer);

  restartBtn.addEventListener("click", startSession);
  strategySel.addEventListener("change", startSession);
  shapeSel.addEventListener("change", startSession);
  assistBox.addEventListener("change", startSession);
  stiffness.addEventListener("change", startSession);

  startSession();
}

main();
