"""Live guidance session server.

A session runs the same closed loop as the simulator, with a network client
supplying pen positions (millimeters) instead of the simulated user. The
engine itself is synchronous and deterministic: feed it samples, ask for
ticks. Two pacing modes:

  lockstep  ticks are driven purely by client-supplied timestamps (one batch
            of ticks per received sample); a scripted session replays to an
            identical state stream.
  live      a dedicated thread runs ticks on the wall clock (hybrid
            sleep/spin for low jitter); the newest sample wins, state frames
            are dropped (never delays a solve) when the client reads slowly.

Frames are JSON text with a `v: 1` version field; see SessionEngine docs for
the exact shapes.
"""

from __future__ import annotations

import asyncio
import json
import math
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .baselines import OpenLoopController, TimedMPCController, TimedReference
from .dynamics import AdmissibleSets
from .em import MagnetModel, actuation_force
from .mpcc import Controller, CostWeights, desired_force
from .paths import load_path_json, make_shape
from .simulate import SimulatedUser, user_step
from .trace import SessionTrace

PROTOCOL_VERSION = 1
PAUSE_TIMEOUT = 2.0     # no pen sample for this long => paused flag [s]
FRAME_QUEUE = 32


class SessionError(ValueError):
    def __init__(self, code, detail):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def _error_frame(code, detail):
    return {"v": PROTOCOL_VERSION, "type": "error", "code": code, "detail": detail}


class SessionEngine:
    """Deterministic control loop over client pen samples.

    start message::

        {v: 1, type: "start", path: <shape name or {closed, points_mm}>,
         strategy: "mpcc"|"mpc"|"ol", weights?: {...}, assist: bool,
         lockstep?: bool}

    pen message::   {v: 1, type: "pen", t: seconds, x_mm: .., y_mm: ..}
    state frame::   {v: 1, type: "state", t, magnet_mm, alpha, theta,
                     s_theta_mm, force_mN, assisted_pen_mm, cost, paused}
    """

    def __init__(self, start_msg, dt=0.01):
        path_spec = start_msg.get("path", "circle")
        if isinstance(path_spec, str):
            try:
                self.path = make_shape(path_spec)
            except Exception as exc:
                raise SessionError("bad_path", str(exc)) from exc
        elif isinstance(path_spec, dict):
            try:
                self.path = load_path_json(path_spec)
            except Exception as exc:
                raise SessionError("bad_path", str(exc)) from exc
        else:
            raise SessionError("bad_path", "path must be a shape name or JSON object")

        strategy = start_msg.get("strategy", "mpcc")
        try:
            weights = CostWeights(**{k: tuple(v) if k == "R" else v
                                     for k, v in (start_msg.get("weights") or {}).items()})
        except (TypeError, ValueError) as exc:
            raise SessionError("bad_weights", str(exc)) from exc
        self.model = MagnetModel.from_hardware()
        self.sets = AdmissibleSets()
        self.dt = dt
        self.assist = bool(start_msg.get("assist", False))
        self.lockstep = bool(start_msg.get("lockstep", False))
        if strategy == "mpcc":
            self.controller = Controller(weights, self.model, self.path,
                                         sets=self.sets, dt=dt)
        elif strategy == "mpc":
            self.controller = TimedMPCController(weights, self.model, self.path,
                                                 timed=TimedReference(),
                                                 sets=self.sets, dt=dt)
        elif strategy == "ol":
            self.controller = OpenLoopController(self.model, self.path,
                                                 timed=TimedReference(),
                                                 sets=self.sets, dt=dt)
        else:
            raise SessionError("bad_strategy", f"unknown strategy {strategy!r}")
        self.weights = weights
        self.latest = None          # (t, pen_si)
        self.prev_raw = None
        self.assisted = None
        self.assist_user = SimulatedUser(f_max=self.model.max_force)
        self.tick_index = 0
        self.trace = SessionTrace(meta={"strategy": strategy, "live": True})

    def feed(self, msg):
        try:
            t = float(msg["t"])
            pen = np.array([float(msg["x_mm"]), float(msg["y_mm"])]) * 1e-3
        except (KeyError, TypeError, ValueError) as exc:
            raise SessionError("bad_pen", f"malformed pen message: {exc}") from exc
        pen = self.sets.clamp_point(pen)
        if self.latest is None or t >= self.latest[0]:
            self.latest = (t, pen)

    def pending_ticks(self):
        """Tick indices due given the newest sample timestamp (lockstep)."""
        if self.latest is None:
            return 0
        due = int(math.floor(self.latest[0] / self.dt)) + 1
        return max(0, due - self.tick_index)

    def tick(self, wall_sample_age=0.0):
        """Run one control tick against the newest sample; returns the frame."""
        if self.latest is None:
            return None
        t = self.tick_index * self.dt
        sample_t, pen = self.latest
        paused = wall_sample_age > PAUSE_TIMEOUT if not self.lockstep \
            else (t - sample_t) > PAUSE_TIMEOUT
        _, diag = self.controller.control_tick(pen, t)
        state = self.controller.state
        force = actuation_force(self.model, state.alpha, pen, state.p_m)

        if self.assist:
            if self.assisted is None:
                self.assisted = pen.copy()
            if self.prev_raw is not None:
                self.assist_user.p_v = (pen - self.prev_raw) / self.dt
            f_assist = actuation_force(self.model, state.alpha, self.assisted,
                                       state.p_m)
            self.assisted = self.sets.clamp_point(
                user_step(self.assist_user, self.assisted, f_assist, self.dt))
            assisted = self.assisted
        else:
            assisted = pen
        self.prev_raw = pen.copy()

        fth = desired_force(self.weights, self.model, pen, diag.setpoint)
        self.trace.append(
            t=t, pen_x=pen[0], pen_y=pen[1],
            est_x=self.controller.estimate.p_p[0] if self.controller.estimate is not None else pen[0],
            est_y=self.controller.estimate.p_p[1] if self.controller.estimate is not None else pen[1],
            mag_x=state.p_m[0], mag_y=state.p_m[1],
            alpha=state.alpha, theta=diag.theta,
            s_x=diag.setpoint[0], s_y=diag.setpoint[1],
            fa_x=force[0], fa_y=force[1], fth_x=fth[0], fth_y=fth[1],
            cost=diag.total_cost, solve_ms=0.0,
        )
        self.tick_index += 1
        return {
            "v": PROTOCOL_VERSION,
            "type": "state",
            "t": t,
            "magnet_mm": [state.p_m[0] * 1e3, state.p_m[1] * 1e3],
            "alpha": state.alpha,
            "theta": diag.theta,
            "s_theta_mm": [diag.setpoint[0] * 1e3, diag.setpoint[1] * 1e3],
            "force_mN": [force[0] * 1e3, force[1] * 1e3],
            "assisted_pen_mm": [assisted[0] * 1e3, assisted[1] * 1e3],
            "cost": diag.total_cost,
            "paused": bool(paused),
        }

    def persist(self, trace_dir):
        if trace_dir is None or len(self.trace) == 0:
            return None
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
        stem = Path(trace_dir) / f"session_{uuid.uuid4().hex[:12]}"
        self.trace.to_csv(f"{stem}.csv")
        self.trace.to_jsonl(f"{stem}.jsonl")
        return str(stem)


class _LiveLoop:
    """Wall-clock tick pump: solves on schedule, never blocks on the writer."""

    def __init__(self, engine, emit, dt):
        self.engine = engine
        self.emit = emit            # callable(frame) -> None, must not block
        self.dt = dt
        self._stop = threading.Event()
        self._lock = threading.Lock()
        self.tick_starts = []
        self.thread = threading.Thread(target=self._run, daemon=True)

    def start(self):
        self.thread.start()

    def stop(self):
        self._stop.set()
        self.thread.join(timeout=2.0)

    def feed(self, msg):
        with self._lock:
            self.engine.feed(msg)
            self._last_sample_wall = time.perf_counter()

    def _run(self):
        self._last_sample_wall = time.perf_counter()
        next_deadline = time.perf_counter() + self.dt
        while not self._stop.is_set():
            now = time.perf_counter()
            wait = next_deadline - now
            if wait > 0.0015:
                time.sleep(wait - 0.001)
            while time.perf_counter() < next_deadline:
                pass  # spin the last millisecond for cadence
            start = time.perf_counter()
            with self._lock:
                age = start - self._last_sample_wall
                frame = self.engine.tick(wall_sample_age=age)
            self.tick_starts.append(start)
            if frame is not None:
                self.emit(frame)
            next_deadline += self.dt
            if time.perf_counter() > next_deadline + 10 * self.dt:
                # fell far behind (debugger, suspended VM): resynchronize
                next_deadline = time.perf_counter() + self.dt


def create_app(trace_dir=None, dt=0.01, static_dir=None):
    """FastAPI app exposing /session (WebSocket), path geometry for the UI
    at /paths/{shape}, and the static UI at /."""
    app = FastAPI(title="magpen guidance service")

    @app.get("/paths/{shape}")
    async def path_geometry(shape: str):
        from fastapi import HTTPException
        try:
            path = make_shape(shape)
        except Exception as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        poly = path.polyline(1e-3) * 1e3
        return {"name": shape, "closed": path.closed,
                "length_m": path.L, "points_mm": poly.tolist()}

    @app.websocket("/session")
    async def session(ws: WebSocket):
        await ws.accept()
        engine = None
        loop = None
        queue: asyncio.Queue = asyncio.Queue(maxsize=FRAME_QUEUE)
        aio_loop = asyncio.get_running_loop()
        dropped = 0

        def emit(frame):
            nonlocal dropped

            def _put():
                nonlocal dropped
                if queue.full():
                    try:
                        queue.get_nowait()  # drop oldest; latest wins
                        dropped += 1
                    except asyncio.QueueEmpty:
                        pass
                queue.put_nowait(frame)

            aio_loop.call_soon_threadsafe(_put)

        async def writer():
            while True:
                frame = await queue.get()
                if frame is None:
                    return
                await ws.send_text(json.dumps(frame))

        writer_task = asyncio.create_task(writer())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as exc:
                    await ws.send_text(json.dumps(_error_frame("bad_json", str(exc))))
                    continue
                mtype = msg.get("type")
                if mtype == "start":
                    if engine is not None:
                        if loop is not None:
                            loop.stop()
                            loop = None
                        engine.persist(trace_dir)
                    try:
                        engine = SessionEngine(msg, dt=dt)
                    except SessionError as exc:
                        engine = None
                        await ws.send_text(json.dumps(_error_frame(exc.code, exc.detail)))
                        continue
                    if not engine.lockstep:
                        loop = _LiveLoop(engine, emit, dt)
                        loop.start()
                elif mtype == "pen":
                    if engine is None:
                        await ws.send_text(json.dumps(_error_frame(
                            "no_session", "send start first")))
                        continue
                    try:
                        if loop is not None:
                            loop.feed(msg)
                        else:
                            engine.feed(msg)
                            for _ in range(engine.pending_ticks()):
                                frame = engine.tick()
                                if frame is not None:
                                    await ws.send_text(json.dumps(frame))
                    except SessionError as exc:
                        await ws.send_text(json.dumps(_error_frame(exc.code, exc.detail)))
                elif mtype == "stop":
                    if loop is not None:
                        loop.stop()
                        loop = None
                    if engine is not None:
                        # flush the final state before persisting
                        frame = engine.tick()
                        if frame is not None:
                            await ws.send_text(json.dumps(frame))
                        saved = engine.persist(trace_dir)
                        await ws.send_text(json.dumps({
                            "v": PROTOCOL_VERSION, "type": "stopped",
                            "trace": saved, "dropped_frames": dropped}))
                        engine = None
                else:
                    await ws.send_text(json.dumps(_error_frame(
                        "bad_type", f"unknown message type {mtype!r}")))
        except WebSocketDisconnect:
            pass
        finally:
            if loop is not None:
                loop.stop()
            if engine is not None:
                engine.persist(trace_dir)
            writer_task.cancel()

    static = static_dir or Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if Path(static).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static), html=True), name="ui")
    return app
