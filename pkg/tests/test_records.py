import json
import random

import pytest
import synth

from refdial.builder import build_records
from refdial.records import (
    ASSISTANT,
    USER,
    CorruptRecordError,
    ImageKey,
    InstructionRecord,
    Turn,
    collect_regions,
    read_records,
    record_from_json,
    record_to_json,
    validate_record,
    write_records,
)
from refdial.templates import TaskKind, default_registry


def make_record(user_text="look at <image> please", assistant_text="[0.100, 0.200, 0.400, 0.600]"):
    turns = [Turn(USER, user_text), Turn(ASSISTANT, assistant_text)]
    return InstructionRecord(
        image=ImageKey("c", "i"),
        task=TaskKind.REC,
        turns=turns,
        regions=collect_regions(turns),
        provenance={"kind": "referring_expression", "line": 1},
    )


class TestImageKey:
    def test_pair_equality_without_hashes(self):
        assert ImageKey("a", "1").same_image(ImageKey("a", "1"))
        assert not ImageKey("a", "1").same_image(ImageKey("b", "1"))

    def test_hash_wins_when_both_present(self):
        a = ImageKey("a", "1", content_hash="xyz")
        b = ImageKey("b", "2", content_hash="xyz")
        c = ImageKey("a", "1", content_hash="other")
        assert a.same_image(b)
        assert not a.same_image(c)  # same ids, different content

    def test_mixed_falls_back_to_ids(self):
        a = ImageKey("a", "1", content_hash="xyz")
        b = ImageKey("a", "1")
        assert a.same_image(b)


class TestValidateRecord:
    def test_valid_record(self):
        assert validate_record(make_record()) == []

    def test_missing_image_token(self):
        assert any("image" in p for p in validate_record(make_record(user_text="no token")))

    def test_residual_placeholder(self):
        rec = make_record(user_text="find <expr> in <image>")
        assert any("<expr>" in p for p in validate_record(rec))

    def test_speaker_alternation(self):
        rec = make_record()
        rec.turns.append(Turn(ASSISTANT, "again"))
        rec.regions = collect_regions(rec.turns)
        assert any("speaker" in p for p in validate_record(rec))

    def test_region_mismatch(self):
        rec = make_record()
        rec.regions = []
        assert any("regions" in p for p in validate_record(rec))

    def test_malformed_group_flagged(self):
        rec = make_record(assistant_text="bad [0.1, 0.2, 0.3]")
        assert any("malformed" in p for p in validate_record(rec))


class TestRoundTrip:
    def test_json_round_trip(self):
        rec = make_record()
        assert record_from_json(record_to_json(rec)) == rec

    def test_file_round_trip_thousand(self, tmp_path):
        registry = default_registry()
        records = []
        for task, factory in [
            (TaskKind.REC, synth.referring_expression),
            (TaskKind.REG, synth.referring_expression),
            (TaskKind.SPOTTING_CAPTION, synth.entity_caption),
            (TaskKind.POINTQA, synth.pointqa),
        ]:
            anns = synth.make_batch(factory, 250, seed=hash(task) % 1000)
            records.extend(build_records(anns, task, registry, seed=3))
        assert len(records) == 1000
        path = tmp_path / "records.jsonl"
        write_records(records, path)
        loaded = read_records(path)
        assert loaded == records

    def test_empty_list_writes_header(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        assert write_records([], path) == 0
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1 and json.loads(lines[0])["format"].endswith("instruction_records")
        assert read_records(path) == []

    def test_truncated_final_line(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records([make_record(), make_record()], path)
        text = path.read_text()
        path.write_text(text[: len(text) - 20])  # chop the last record mid-object
        with pytest.raises(CorruptRecordError) as err:
            read_records(path)
        assert err.value.line_no == 3

    def test_bad_header(self, tmp_path):
        path = tmp_path / "records.jsonl"
        path.write_text('{"format": "something-else"}\n')
        with pytest.raises(CorruptRecordError):
            read_records(path)

    def test_byte_offsets_survive(self, tmp_path):
        rec = make_record(user_text="café <image> [0.250, 0.750]")
        path = tmp_path / "r.jsonl"
        write_records([rec], path)
        (loaded,) = read_records(path)
        assert loaded.regions == rec.regions
        assert validate_record(loaded) == []

    def test_non_ascii_round_trip(self, tmp_path):
        rng = random.Random(0)
        rec = make_record(user_text="über <image> schön [0.100, 0.900]")
        path = tmp_path / "r.jsonl"
        write_records([rec], path)
        assert read_records(path) == [rec]
