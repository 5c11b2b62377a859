import { describe, expect, it } from "vitest";
import { fitView } from "../src/calibration.js";
import { StateFrame } from "../src/protocol.js";
import { RecordingContext, render, Scene } from "../src/renderer.js";

function state(partial: Partial<StateFrame> = {}): StateFrame {
  return {
    v: 1,
    type: "state",
    t: 1.0,
    magnet_mm: [120, 70],
    alpha: 0.5,
    theta: 0.05,
    s_theta_mm: [118, 68],
    force_mN: [20, 10],
    assisted_pen_mm: [115, 65],
    cost: 2.0,
    paused: false,
    ...partial,
  };
}

function scene(partial: Partial<Scene> = {}): Scene {
  return {
    path: [
      [80, 65],
      [110, 80],
      [140, 65],
    ],
    pathLengthM: 0.1,
    rawStroke: [
      [100, 60],
      [105, 62],
    ],
    assistedStroke: [
      [100, 60],
      [104, 63],
    ],
    latest: state(),
    stale: false,
    connected: true,
    ...partial,
  };
}

describe("renderer", () => {
  it("replays a scripted state to a stable golden snapshot", () => {
    const view = fitView(920, 560);
    const a = new RecordingContext();
    render(a, view, scene());
    const b = new RecordingContext();
    render(b, view, scene());
    expect(a.ops).toEqual(b.ops);
    expect(a.ops.length).toBeGreaterThan(20);
    expect(JSON.stringify(a.ops)).toMatchSnapshot();
  });

  it("draws no force arrow when the force is zero", () => {
    const view = fitView(920, 560);
    const withForce = new RecordingContext();
    render(withForce, view, scene());
    const noForce = new RecordingContext();
    render(noForce, view, scene({ latest: state({ force_mN: [0, 0] }) }));
    const arrows = (ops: (string | number)[][]) =>
      ops.filter((op) => op[0] === "strokeStyle" && op[1] === "#aa22aa").length;
    expect(arrows(withForce.ops)).toBe(1);
    expect(arrows(noForce.ops)).toBe(0);
  });

  it("shows the completion banner at the end of the path", () => {
    const view = fitView(920, 560);
    const ctx = new RecordingContext();
    render(ctx, view, scene({ latest: state({ theta: 0.1 }), pathLengthM: 0.1 }));
    const texts = ctx.ops.filter((op) => op[0] === "fillText").map((op) => op[1]);
    expect(texts).toContain("path complete");
  });

  it("indicates staleness and disconnection", () => {
    const view = fitView(920, 560);
    const ctx = new RecordingContext();
    render(ctx, view, scene({ stale: true, connected: false }));
    const texts = ctx.ops.filter((op) => op[0] === "fillText").map((op) => op[1]);
    expect(texts).toContain("state stale");
    expect(texts).toContain("disconnected");
  });

  it("renders the reference path dotted", () => {
    const view = fitView(920, 560);
    const ctx = new RecordingContext();
    render(ctx, view, scene());
    const dashIdx = ctx.ops.findIndex((op) => op[0] === "setLineDash" && op.length === 3);
    expect(dashIdx).toBeGreaterThanOrEqual(0);
  });
});
