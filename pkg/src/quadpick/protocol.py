"""Wire protocol: the typed JSON envelope, payload schemas, frame RLE
codec, and the mapping from inbound messages to operator events.

Every message is one UTF-8 JSON text frame:

    {"type": <registered type>, "seq": <int>, "sim_time": <float>,
     "payload": {...}}

seq is monotone per direction.  The full schema catalog is documented
in protocol.md at the repository root; the jsonschema definitions here
are the source of truth.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator

from .mission import EventKind, OperatorEvent

PROTOCOL_VERSION = 1


class UnknownType(ValueError):
    pass


class SchemaViolation(ValueError):
    pass


class UnknownRoom(SchemaViolation):
    pass


_BBOX = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 4,
    "maxItems": 4,
}
_CAMERA = {"enum": ["front", "gripper"]}

# client -> server payloads
INBOUND_SCHEMAS: dict[str, dict] = {
    "go_to_room": {
        "type": "object",
        "properties": {"room": {"type": "string"}},
        "required": ["room"],
        "additionalProperties": False,
    },
    "begin_scan": {"type": "object", "additionalProperties": False},
    "stop": {"type": "object", "additionalProperties": False},
    "select_click": {
        "type": "object",
        "properties": {
            "camera": _CAMERA,
            "u": {"type": "number", "minimum": 0},
            "v": {"type": "number", "minimum": 0},
        },
        "required": ["camera", "u", "v"],
        "additionalProperties": False,
    },
    "select_drag": {
        "type": "object",
        "properties": {"camera": _CAMERA, "rect": _BBOX},
        "required": ["camera", "rect"],
        "additionalProperties": False,
    },
    "confirm_drag": {
        "type": "object",
        "properties": {"accept": {"type": "boolean"}},
        "required": ["accept"],
        "additionalProperties": False,
    },
    "toggle_detection": {
        "type": "object",
        "properties": {"enabled": {"type": "boolean"}},
        "required": ["enabled"],
        "additionalProperties": False,
    },
}

# server -> client payloads
OUTBOUND_SCHEMAS: dict[str, dict] = {
    "hello": {
        "type": "object",
        "properties": {
            "protocol_version": {"type": "integer"},
            "scenario": {"type": "string"},
            "rooms": {"type": "array", "items": {"type": "string"}},
            "cameras": {"type": "array", "items": _CAMERA},
        },
        "required": ["protocol_version", "scenario", "rooms", "cameras"],
        "additionalProperties": False,
    },
    "status": {
        "type": "object",
        "properties": {
            "phase": {"type": "string"},
            "detail": {"type": "string"},
            "sim_time": {"type": "number"},
            "tick": {"type": "integer"},
            "location": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 3,
                "maxItems": 3,
            },
            "room": {"type": ["string", "null"]},
            "target_room": {"type": ["string", "null"]},
            "tracked_object": {"type": ["string", "null"]},
            "held_object": {"type": ["string", "null"]},
            "detection_enabled": {"type": "boolean"},
            "warning": {"type": ["string", "null"]},
            "fault_reason": {"type": ["string", "null"]},
            "awaiting_confirmation": {"type": "boolean"},
        },
        "required": ["phase", "detail", "sim_time", "tick", "location"],
        "additionalProperties": False,
    },
    "detections": {
        "type": "object",
        "properties": {
            "camera": _CAMERA,
            "boxes": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "object_id": {"type": "string"},
                        "class_name": {"type": "string"},
                        "bbox": _BBOX,
                        "confidence": {"type": "number", "minimum": 0, "maximum": 1},
                    },
                    "required": ["object_id", "class_name", "bbox", "confidence"],
                    "additionalProperties": False,
                },
            },
        },
        "required": ["camera", "boxes"],
        "additionalProperties": False,
    },
    "frame": {
        "type": "object",
        "properties": {
            "camera": _CAMERA,
            "width": {"type": "integer", "minimum": 1},
            "height": {"type": "integer", "minimum": 1},
            "tick": {"type": "integer"},
            "labels_rle": {
                "type": "array",
                "items": {
                    "type": "array",
                    "items": {"type": "integer"},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
            "palette": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "properties": {
                        "object_id": {"type": "string"},
                        "class_name": {"type": "string"},
                        "color": {
                            "type": "array",
                            "items": {"type": "integer", "minimum": 0, "maximum": 255},
                            "minItems": 3,
                            "maxItems": 3,
                        },
                    },
                    "required": ["object_id", "class_name", "color"],
                    "additionalProperties": False,
                },
            },
            "depth_rle": {
                "type": "array",
                "items": {
                    "type": "array",
                    "items": {"type": "integer"},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
            "depth_unit_mm": {"type": "integer"},
        },
        "required": ["camera", "width", "height", "tick", "labels_rle", "palette"],
        "additionalProperties": False,
    },
    "confirm_request": {
        "type": "object",
        "properties": {
            "target_object_id": {"type": ["string", "null"]},
            "target_class": {"type": ["string", "null"]},
            "rect": _BBOX,
        },
        "required": ["target_object_id", "rect"],
        "additionalProperties": False,
    },
    "metrics": {
        "type": "object",
        "properties": {"record": {"type": "object"}},
        "required": ["record"],
        "additionalProperties": False,
    },
    "error": {
        "type": "object",
        "properties": {"code": {"type": "string"}, "message": {"type": "string"}},
        "required": ["code", "message"],
        "additionalProperties": False,
    },
}

ENVELOPE_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"type": "string"},
        "seq": {"type": "integer", "minimum": 0},
        "sim_time": {"type": "number"},
        "payload": {"type": "object"},
    },
    "required": ["type", "seq", "payload"],
    "additionalProperties": False,
}

_ENVELOPE_VALIDATOR = Draft202012Validator(ENVELOPE_SCHEMA)
_INBOUND_VALIDATORS = {t: Draft202012Validator(s) for t, s in INBOUND_SCHEMAS.items()}
_OUTBOUND_VALIDATORS = {t: Draft202012Validator(s) for t, s in OUTBOUND_SCHEMAS.items()}


def envelope(msg_type: str, seq: int, sim_time: float, payload: dict) -> dict:
    return {"type": msg_type, "seq": seq, "sim_time": sim_time, "payload": payload}


def validate_inbound(message: dict) -> dict:
    """Validate a client message; returns it back.

    Raises:
        SchemaViolation: bad envelope or payload.
        UnknownType: unregistered message type.
    """
    errors = list(_ENVELOPE_VALIDATOR.iter_errors(message))
    if errors:
        raise SchemaViolation(f"envelope: {errors[0].message}")
    msg_type = message["type"]
    validator = _INBOUND_VALIDATORS.get(msg_type)
    if validator is None:
        raise UnknownType(f"unknown message type {msg_type!r}")
    errors = list(validator.iter_errors(message["payload"]))
    if errors:
        raise SchemaViolation(f"{msg_type}: {errors[0].message}")
    return message


def validate_outbound(message: dict) -> dict:
    errors = list(_ENVELOPE_VALIDATOR.iter_errors(message))
    if errors:
        raise SchemaViolation(f"envelope: {errors[0].message}")
    validator = _OUTBOUND_VALIDATORS.get(message["type"])
    if validator is None:
        raise UnknownType(f"unknown message type {message['type']!r}")
    errors = list(validator.iter_errors(message["payload"]))
    if errors:
        raise SchemaViolation(f"{message['type']}: {errors[0].message}")
    return message


def inbound(message: dict, seq: int, rooms: list[str] | None = None) -> OperatorEvent:
    """Map a validated client message to an operator event.

    ``seq`` is the mission-side event sequence number (arrival order),
    independent of the client's own envelope seq.

    Raises:
        UnknownType / SchemaViolation: invalid message.
        UnknownRoom: go_to_room names a room not in the scenario.
    """
    validate_inbound(message)
    msg_type = message["type"]
    payload = message["payload"]
    if msg_type == "go_to_room":
        if rooms is not None and payload["room"] not in rooms:
            raise UnknownRoom(f"unknown room {payload['room']!r}")
        return OperatorEvent(kind=EventKind.GO_TO_ROOM, seq=seq, room=payload["room"])
    if msg_type == "begin_scan":
        return OperatorEvent(kind=EventKind.BEGIN_SCAN, seq=seq)
    if msg_type == "stop":
        return OperatorEvent(kind=EventKind.STOP, seq=seq)
    if msg_type == "select_click":
        return OperatorEvent(
            kind=EventKind.SELECT_CLICK,
            seq=seq,
            camera=payload["camera"],
            point=(payload["u"], payload["v"]),
        )
    if msg_type == "select_drag":
        return OperatorEvent(
            kind=EventKind.SELECT_DRAG,
            seq=seq,
            camera=payload["camera"],
            rect=tuple(payload["rect"]),
        )
    if msg_type == "confirm_drag":
        return OperatorEvent(kind=EventKind.CONFIRM_DRAG, seq=seq, accept=payload["accept"])
    return OperatorEvent(kind=EventKind.TOGGLE_DETECTION, seq=seq, enabled=payload["enabled"])


# -- frame encoding ----------------------------------------------------------

def rle_encode(values: np.ndarray) -> list[list[int]]:
    """Row-major run-length encoding of an integer image; lossless."""
    flat = np.asarray(values).ravel()
    if flat.size == 0:
        return []
    changes = np.nonzero(np.diff(flat))[0] + 1
    starts = np.concatenate([[0], changes])
    ends = np.concatenate([changes, [flat.size]])
    return [[int(e - s), int(flat[s])] for s, e in zip(starts, ends)]


def rle_decode(runs: list[list[int]], width: int, height: int, dtype=np.int32) -> np.ndarray:
    total = sum(count for count, _ in runs)
    if total != width * height:
        raise SchemaViolation(f"RLE covers {total} pixels, expected {width * height}")
    flat = np.empty(width * height, dtype=dtype)
    pos = 0
    for count, value in runs:
        flat[pos: pos + count] = value
        pos += count
    return flat.reshape(height, width)


_CLASS_COLORS = [
    (230, 80, 60),
    (70, 160, 230),
    (90, 200, 120),
    (240, 190, 60),
    (180, 110, 220),
    (240, 130, 40),
    (110, 220, 210),
    (220, 120, 160),
]


def class_color(class_name: str) -> tuple[int, int, int]:
    if not class_name:
        return (20, 22, 26)
    return _CLASS_COLORS[sum(class_name.encode()) % len(_CLASS_COLORS)]


def encode_frame(frame) -> dict:
    """Frame payload: lossless label RLE + palette + millimeter depth RLE."""
    palette = {}
    for idx, (object_id, class_name) in enumerate(zip(frame.label_names, frame.class_names)):
        if idx == 0:
            continue
        palette[str(idx)] = {
            "object_id": object_id,
            "class_name": class_name,
            "color": list(class_color(class_name)),
        }
    depth_mm = np.round(frame.depth * 1000.0).astype(np.int32)
    k = frame.intrinsics
    return {
        "camera": frame.camera,
        "width": k.width,
        "height": k.height,
        "tick": frame.tick,
        "labels_rle": rle_encode(frame.labels),
        "palette": palette,
        "depth_rle": rle_encode(depth_mm),
        "depth_unit_mm": 1,
    }


def decode_frame_labels(payload: dict) -> np.ndarray:
    return rle_decode(payload["labels_rle"], payload["width"], payload["height"], np.int16)


def dumps(message: dict) -> str:
    return json.dumps(message, sort_keys=True, separators=(",", ":"))


def loads(text: str) -> dict:
    try:
        message = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"not valid JSON: {exc}") from exc
    if not isinstance(message, dict):
        raise SchemaViolation("message must be a JSON object")
    return message
