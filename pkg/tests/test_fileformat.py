from __future__ import annotations

import json
import random

import pytest

from storydig.errors import InvariantViolation, MalformedDocument, SchemaVersionTooNew
from storydig.fileformat import deserialize, instrument_to_doc, serialize
from storydig.model import SCHEMA_VERSION

from helpers import make_milk_instrument
from randgen import random_static_instrument


def test_round_trip_structural_equality():
    instr, *_ = make_milk_instrument()
    data = serialize(instr)
    again = deserialize(data)
    assert again == instr


def test_serialize_is_byte_idempotent():
    instr, *_ = make_milk_instrument()
    data = serialize(instr)
    assert serialize(deserialize(data)) == data


def test_document_is_newline_terminated_utf8():
    instr, *_ = make_milk_instrument()
    data = serialize(instr)
    assert data.endswith(b"\n")
    data.decode("utf-8")


def test_schema_version_is_first_key():
    instr, *_ = make_milk_instrument()
    doc = json.loads(serialize(instr))
    assert next(iter(doc)) == "schema_version"
    assert doc["schema_version"] == SCHEMA_VERSION


def test_schema_version_too_new_rejected():
    instr, *_ = make_milk_instrument()
    doc = instrument_to_doc(instr)
    doc["schema_version"] = SCHEMA_VERSION + 1
    data = (json.dumps(doc) + "\n").encode()
    with pytest.raises(SchemaVersionTooNew):
        deserialize(data)


def test_truncated_document_is_malformed_with_offset():
    instr, *_ = make_milk_instrument()
    data = serialize(instr)[:40]
    with pytest.raises(MalformedDocument) as info:
        deserialize(data)
    assert "offset" in info.value.details


def test_wrong_type_field_reports_path():
    instr, *_ = make_milk_instrument()
    doc = instrument_to_doc(instr)
    doc["characters"][0]["traits"] = "not a list"
    with pytest.raises(MalformedDocument) as info:
        deserialize((json.dumps(doc) + "\n").encode())
    assert "characters[0]" in info.value.details["path"]


def test_semantically_broken_document_reports_findings():
    instr, *_ = make_milk_instrument()
    doc = instrument_to_doc(instr)
    doc["characters"][1]["name"] = doc["characters"][0]["name"]
    with pytest.raises(InvariantViolation) as info:
        deserialize((json.dumps(doc) + "\n").encode())
    assert any(f.code == "CHARACTER_NAME_DUPLICATE" for f in info.value.report.findings)


def test_serialize_requires_valid_instrument():
    instr, *_ = make_milk_instrument()
    instr.premise.text = " "
    with pytest.raises(InvariantViolation):
        serialize(instr)


def test_participant_sets_are_canonically_sorted():
    instr, alice, bob, scene_id = make_milk_instrument()
    doc = json.loads(serialize(instr))
    participants = doc["scenes"][0]["participants"]
    assert participants == sorted(participants)


def test_round_trip_over_random_instruments():
    rng = random.Random(11)
    for _ in range(100):
        instr = random_static_instrument(rng)
        data = serialize(instr)
        again = deserialize(data)
        assert again == instr
        assert serialize(again) == data
