import json

import pytest

from quadpick.scenario import ParseError, ValidationError, load_scenario

MINIMAL = {
    "version": 1,
    "name": "minimal",
    "grid": {
        "resolution": 0.5,
        "rows": [
            "##########",
            "#........#",
            "#........#",
            "#........#",
            "#........#",
            "#........#",
            "#........#",
            "#........#",
            "#........#",
            "##########",
        ],
    },
    "rooms": [{"name": "Room A", "entry_waypoint": [2.0, 2.0], "scan_center": [2.5, 2.5]}],
    "objects": [
        {
            "id": "box-1",
            "class": "crate",
            "shape": {"kind": "box", "size": [0.1, 0.1, 0.1]},
            "position": [2.0, 2.5],
            "mass": 0.1,
            "slip": 0.2,
        }
    ],
    "robot": {"home": [1.0, 1.0, 0.0], "place_target": [1.3, 1.0, 0.05]},
    "cameras": {
        "front": {"intrinsics": {"fx": 60.0, "fy": 60.0, "cx": 31.5, "cy": 23.5, "width": 64, "height": 48}},
        "gripper": {"intrinsics": {"fx": 60.0, "fy": 60.0, "cx": 31.5, "cy": 23.5, "width": 64, "height": 48}},
    },
}


def doc(**overrides):
    merged = json.loads(json.dumps(MINIMAL))
    merged.update(overrides)
    return json.dumps(merged)


class TestLoadScenario:
    def test_minimal_document(self):
        scene = load_scenario(doc())
        assert len(scene.rooms) == 1
        assert scene.rooms[0].name == "Room A"
        assert len(scene.objects) == 1
        assert scene.seed == 0

    def test_malformed_json(self):
        with pytest.raises(ParseError):
            load_scenario("{not json")

    def test_duplicate_room_names(self):
        rooms = [
            {"name": "Room A", "entry_waypoint": [2.0, 2.0], "scan_center": [2.5, 2.5]},
            {"name": "Room A", "entry_waypoint": [3.0, 3.0], "scan_center": [3.5, 3.5]},
        ]
        with pytest.raises(ValidationError, match="rooms\\[1\\].name"):
            load_scenario(doc(rooms=rooms))

    def test_missing_version(self):
        raw = json.loads(doc())
        del raw["version"]
        with pytest.raises(ValidationError, match="version"):
            load_scenario(json.dumps(raw))

    def test_entry_waypoint_in_wall(self):
        rooms = [{"name": "Room A", "entry_waypoint": [0.1, 0.1], "scan_center": [2.5, 2.5]}]
        with pytest.raises(ValidationError, match="entry_waypoint"):
            load_scenario(doc(rooms=rooms))

    def test_bad_slip_named_in_error(self):
        raw = json.loads(doc())
        raw["objects"][0]["slip"] = 1.5
        with pytest.raises(ValidationError, match="objects\\[0\\]"):
            load_scenario(json.dumps(raw))

    def test_negative_resolution(self):
        raw = json.loads(doc())
        raw["grid"]["resolution"] = -0.5
        with pytest.raises(ValidationError, match="grid.resolution"):
            load_scenario(json.dumps(raw))

    def test_duplicate_object_ids(self):
        raw = json.loads(doc())
        raw["objects"].append(dict(raw["objects"][0]))
        with pytest.raises(ValidationError, match="objects\\[1\\].id"):
            load_scenario(json.dumps(raw))

    def test_reference_scenario(self, reference_text):
        scene = load_scenario(reference_text)
        assert scene.name == "lab_floor9"
        assert [r.name for r in scene.rooms] == ["Room A", "Room B", "Room C"]
        assert sorted(o.class_name for o in scene.objects) == ["battery", "charger", "golf_ball"]
        assert scene.seed == 7
        # objects rest on the floor
        for obj in scene.objects:
            assert obj.pose.translation[2] == pytest.approx(obj.resting_height())

    def test_grid_round_trip(self, reference_scene, reference_text):
        rows = json.loads(reference_text)["grid"]["rows"]
        assert reference_scene.grid.to_rows() == rows
