import copy
import json

import pytest

from mixtwin.scenario import (
    ValidationError,
    load_preset,
    load_scenario,
    parse_scenario,
    scenario_hash,
)


def minimal_doc(**overrides):
    doc = {
        "name": "mini",
        "seed": 3,
        "duration_s": 10.0,
        "warmup_s": 1.0,
        "vehicles": [
            {"id": "v1", "kind": "virtual", "initial_s": 30.0,
             "controller": {"type": "head", "trigger_s": 0.0}},
            {"id": "v2", "kind": "virtual", "initial_s": 21.6,
             "controller": {"type": "cacc"}},
        ],
    }
    doc.update(overrides)
    return doc


def test_presets_parse():
    for name in ("experiment_a", "experiment_b"):
        sc = parse_scenario(load_preset(name))
        assert sc.name == name
        assert len(sc.vehicles) == 6
        assert sc.duration_s == 120.0


def test_preset_formations_match_experiment_design():
    a = parse_scenario(load_preset("experiment_a"))
    assert [v.kind for v in a.vehicles] == ["physical"] * 3 + ["virtual"] * 3
    b = parse_scenario(load_preset("experiment_b"))
    assert [v.kind for v in b.vehicles] == [
        "physical", "physical", "virtual", "hdv", "virtual", "virtual",
    ]
    assert b.vehicles[3].script is not None


def test_minimal_doc_parses():
    sc = parse_scenario(minimal_doc())
    assert sc.vehicles[0].frame.id == "FullScale"
    assert sc.control_dt == pytest.approx(0.05)
    assert sc.hash == scenario_hash(minimal_doc())


def test_unknown_preset():
    with pytest.raises(KeyError):
        load_preset("experiment_c")


@pytest.mark.parametrize(
    "mutate,path_fragment",
    [
        (lambda d: d.update(seed=-1), "$.seed"),
        (lambda d: d.update(mode="warp"), "$.mode"),
        (lambda d: d.update(duration_s=0.0), "$.duration_s"),
        (lambda d: d.update(warmup_s=10.0), "$.warmup_s"),
        (lambda d: d.update(physics_dt_s=0.5), "$.physics_dt_s"),
        (lambda d: d.update(control_rate_hz=33.0), "$.control_rate_hz"),
        (lambda d: d.update(vehicles=[]), "$.vehicles"),
        (lambda d: d.update(track="figure-8"), "$.track"),
        (lambda d: d.update(links={"Bogus": {}}), "$.links.Bogus"),
        (lambda d: d.update(localization={"bogus": 1.0}), "$.localization.bogus"),
    ],
)
def test_validation_errors_carry_paths(mutate, path_fragment):
    doc = minimal_doc()
    mutate(doc)
    with pytest.raises(ValidationError) as err:
        parse_scenario(doc)
    assert path_fragment in str(err.value)


def test_duplicate_vehicle_id_rejected():
    doc = minimal_doc()
    doc["vehicles"][1]["id"] = "v1"
    with pytest.raises(ValidationError) as err:
        parse_scenario(doc)
    assert "duplicate" in str(err.value)


def test_exactly_one_head_required():
    doc = minimal_doc()
    doc["vehicles"][1]["controller"] = {"type": "head"}
    with pytest.raises(ValidationError):
        parse_scenario(doc)
    doc = minimal_doc()
    doc["vehicles"][0]["controller"] = {"type": "cacc"}
    with pytest.raises(ValidationError):
        parse_scenario(doc)


def test_platoon_arclengths_strictly_decreasing():
    doc = minimal_doc()
    doc["vehicles"][1]["initial_s"] = 30.0
    with pytest.raises(ValidationError) as err:
        parse_scenario(doc)
    assert "decrease" in str(err.value)


def test_human_controller_allowed_kinds():
    # Virtual vehicles are cloud-controlled only.
    doc = minimal_doc()
    doc["vehicles"][1]["controller"] = {"type": "human", "script": None}
    with pytest.raises(ValidationError):
        parse_scenario(doc)
    # Both driving modes: a dedicated hdv and a human-driven miniature.
    for kind in ("hdv", "physical"):
        doc = minimal_doc()
        doc["vehicles"][1]["kind"] = kind
        doc["vehicles"][1]["controller"] = {"type": "human", "script": None}
        sc = parse_scenario(doc)
        assert sc.vehicles[1].script is None


def test_hdv_cannot_lead_or_run_cacc():
    doc = minimal_doc()
    doc["vehicles"][1]["kind"] = "hdv"
    with pytest.raises(ValidationError):
        parse_scenario(doc)


def test_explicit_waypoint_track():
    doc = minimal_doc()
    side = 61.25
    doc["track"] = {
        "waypoints": [[0, 0], [side, 0], [side, side], [0, side]],
        "landmark_e_s": 5.0,
    }
    sc = parse_scenario(doc)
    assert sc.track.lap_length == pytest.approx(245.0)
    assert sc.track.landmark_e_s == 5.0


def test_zero_shorthands():
    doc = minimal_doc(links="zero", localization="zero")
    sc = parse_scenario(doc)
    assert all(l.delay_mean_ms == 0.0 and l.delay_std_ms == 0.0 for l in sc.links.values())
    assert sc.localization.noise_std_x_mm == 0.0
    assert sc.localization.processing_delay_mean_ms == 0.0


def test_load_scenario_from_file(tmp_path):
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(minimal_doc()))
    sc = load_scenario(path)
    assert sc.name == "mini"
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ValidationError):
        load_scenario(bad)


def test_params_overrides_validated():
    doc = minimal_doc()
    doc["vehicles"][0]["params"] = {"bogus": 1.0}
    with pytest.raises(ValidationError):
        parse_scenario(doc)
    doc = minimal_doc()
    doc["vehicles"][0]["params"] = {"wheelbase": -1.0}
    with pytest.raises(ValidationError):
        parse_scenario(doc)


def test_scenario_hash_stable_under_key_order():
    doc = minimal_doc()
    shuffled = json.loads(json.dumps(doc))
    reordered = {k: shuffled[k] for k in reversed(list(shuffled))}
    assert scenario_hash(doc) == scenario_hash(reordered)
    changed = copy.deepcopy(doc)
    changed["seed"] = 4
    assert scenario_hash(doc) != scenario_hash(changed)
