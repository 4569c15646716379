"""WebSocket service exposing a mission over the JSON protocol.

One mission controller per server; every connected operator sees the
same broadcast stream.  Connection handlers funnel events into the
mission queue; nothing touches simulation state directly.

The simulation advances through ``pump(ticks)``.  In live serving the
background task calls it at wall-clock pace; headless tests and tools
can instead POST /step to advance deterministically.
"""

from __future__ import annotations

import asyncio
import contextlib
import errno
import math
import socket

from starlette.applications import Starlette
from starlette.requests import Request
from starlette.responses import JSONResponse
from starlette.routing import Route, WebSocketRoute
from starlette.websockets import WebSocket, WebSocketDisconnect

from . import protocol
from .mission import MissionController, Phase
from .scenario import load_scenario_file
from .scene import WorldScene

STATUS_EVERY_TICKS = 2  # 10 Hz at the default 20 Hz tick rate
FRAME_EVERY_TICKS = 4  # 5 Hz
SEND_BUFFER_LIMIT = 256  # queued messages before a slow client is dropped


class PortInUse(OSError):
    pass


class _Client:
    def __init__(self, websocket: WebSocket):
        self.websocket = websocket
        self.seq = 0
        self.last_inbound_seq = -1
        self.queue: asyncio.Queue[str] = asyncio.Queue()
        self.dropped = False

    def push(self, msg_type: str, sim_time: float, payload: dict):
        message = protocol.envelope(msg_type, self.seq, sim_time, payload)
        protocol.validate_outbound(message)
        self.seq += 1
        if self.queue.qsize() >= SEND_BUFFER_LIMIT:
            self.dropped = True
            return
        self.queue.put_nowait(protocol.dumps(message))


class BridgeServer:
    """Mission + broadcast fan-out behind a Starlette ASGI app."""

    def __init__(self, scene: WorldScene, seed: int | None = None, realtime: bool = False):
        self.scene = scene
        self.controller = MissionController(scene, seed=seed)
        self.realtime = realtime
        self.clients: list[_Client] = []
        self.event_seq = 0
        self._metrics_sent = 0
        self._last_phase = self.controller.phase
        self.app = Starlette(
            routes=[
                WebSocketRoute("/ws", self._ws_endpoint),
                Route("/step", self._step_endpoint, methods=["POST"]),
                Route("/healthz", self._health_endpoint, methods=["GET"]),
            ],
            on_startup=[self._startup],
            on_shutdown=[self._shutdown],
        )
        self._pump_task: asyncio.Task | None = None
        self._stopping = False

    # -- lifecycle ----------------------------------------------------------

    async def _startup(self):
        if self.realtime:
            self._pump_task = asyncio.create_task(self._pump_loop())

    async def _shutdown(self):
        self._stopping = True
        if self._pump_task is not None:
            self._pump_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._pump_task

    async def _pump_loop(self):
        dt = self.controller.dt
        while not self._stopping:
            self.pump(1)
            await asyncio.sleep(dt)

    # -- simulation stepping --------------------------------------------------

    def pump(self, ticks: int = 1):
        """Advance the mission and emit the broadcasts that fall due."""
        for _ in range(ticks):
            status = self.controller.run_tick()
            tick = self.controller.tick_index
            if tick % STATUS_EVERY_TICKS == 0:
                self._broadcast("status", status.to_dict())
                if self.controller.detection_enabled:
                    self._broadcast_detections()
            if tick % FRAME_EVERY_TICKS == 0:
                self._broadcast_frames()
            self._emit_edge_messages()
        self._flush_dropped()

    def _emit_edge_messages(self):
        phase = self.controller.phase
        if phase == Phase.AWAIT_DRAG_CONFIRM and self._last_phase != Phase.AWAIT_DRAG_CONFIRM:
            sel = self.controller.pending_selection
            self._broadcast(
                "confirm_request",
                {
                    "target_object_id": sel.target_object_id if sel else None,
                    "target_class": sel.target_class if sel else None,
                    "rect": list(sel.resolved_bbox) if sel else [0, 0, 1, 1],
                },
            )
        self._last_phase = phase
        while self._metrics_sent < len(self.controller.metrics):
            record = self.controller.metrics[self._metrics_sent]
            self._broadcast("metrics", {"record": record.to_dict()})
            self._metrics_sent += 1

    def _broadcast(self, msg_type: str, payload: dict):
        sim_time = round(self.controller.sim_time, 6)
        for client in self.clients:
            client.push(msg_type, sim_time, payload)

    def _broadcast_detections(self):
        boxes = [
            {
                "object_id": d.object_id,
                "class_name": d.class_name,
                "bbox": list(d.bbox),
                "confidence": round(d.confidence, 4),
            }
            for d in self.controller.last_detections
        ]
        self._broadcast("detections", {"camera": "front", "boxes": boxes})

    def _broadcast_frames(self):
        for camera in ("front", "gripper"):
            frame = self.controller.display_frame(camera)
            self._broadcast("frame", protocol.encode_frame(frame))

    def _flush_dropped(self):
        self.clients = [c for c in self.clients if not c.dropped]

    # -- endpoints -------------------------------------------------------------

    async def _health_endpoint(self, request: Request):
        return JSONResponse({"ok": True, "phase": self.controller.phase.value})

    async def _step_endpoint(self, request: Request):
        ticks = int(request.query_params.get("ticks", "1"))
        self.pump(max(1, min(ticks, 100000)))
        return JSONResponse({"tick": self.controller.tick_index})

    async def _ws_endpoint(self, websocket: WebSocket):
        await websocket.accept()
        client = _Client(websocket)
        self.clients.append(client)
        client.push(
            "hello",
            round(self.controller.sim_time, 6),
            {
                "protocol_version": protocol.PROTOCOL_VERSION,
                "scenario": self.scene.name,
                "rooms": [room.name for room in self.scene.rooms],
                "cameras": ["front", "gripper"],
            },
        )
        sender = asyncio.create_task(self._send_loop(client))
        try:
            while True:
                text = await websocket.receive_text()
                self._handle_text(client, text)
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await sender
            if client in self.clients:
                self.clients.remove(client)

    async def _send_loop(self, client: _Client):
        while True:
            text = await client.queue.get()
            try:
                await client.websocket.send_text(text)
            except Exception:
                client.dropped = True
                return

    def _handle_text(self, client: _Client, text: str):
        sim_time = round(self.controller.sim_time, 6)
        try:
            message = protocol.loads(text)
            protocol.validate_inbound(message)
            if message["seq"] <= client.last_inbound_seq:
                raise protocol.SchemaViolation(
                    f"seq {message['seq']} not increasing (last {client.last_inbound_seq})"
                )
            client.last_inbound_seq = message["seq"]
            event = protocol.inbound(
                message, self.event_seq, rooms=[r.name for r in self.scene.rooms]
            )
        except protocol.UnknownRoom as exc:
            client.push("error", sim_time, {"code": "unknown_room", "message": str(exc)})
            return
        except protocol.UnknownType as exc:
            client.push("error", sim_time, {"code": "unknown_type", "message": str(exc)})
            return
        except protocol.SchemaViolation as exc:
            client.push("error", sim_time, {"code": "schema_violation", "message": str(exc)})
            return
        self.event_seq += 1
        self.controller.submit(event)


def build_server(scenario_path, seed: int | None = None, realtime: bool = False) -> BridgeServer:
    return BridgeServer(load_scenario_file(scenario_path), seed=seed, realtime=realtime)


def serve(scenario_path, port: int = 8765, seed: int | None = None):
    """Run the bridge on a real socket until interrupted.

    Raises:
        PortInUse: the port is already bound.
    """
    import uvicorn

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind(("0.0.0.0", port))
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise PortInUse(f"port {port} is already in use") from exc
        raise
    finally:
        probe.close()
    server = build_server(scenario_path, seed=seed, realtime=True)
    uvicorn.run(server.app, host="0.0.0.0", port=port, log_level="warning")
