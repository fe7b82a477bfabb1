from __future__ import annotations

import datetime as dt
import json

import numpy as np
import pytest

from longtail.annotations import (
    BBox,
    build_split,
    class_stats,
    compose_training_set,
    draw_sim_records,
    emit_annotations,
    oversample,
    parse_annotations,
)
from longtail.errors import (
    AnnotationParseError,
    IntegrityError,
    PoolError,
    SplitError,
    ValidationError,
)
from longtail.rng import night_quota

from conftest import check_split_invariants, make_record, surrogate_records


class TestParseEmit:
    def test_empty_corpus(self):
        data = json.dumps({"images": [], "annotations": [], "categories": []}).encode()
        assert parse_annotations(data) == []

    def test_single_image_single_box(self):
        data = json.dumps(
            {
                "images": [
                    {
                        "id": "a",
                        "file_name": "a.png",
                        "width": 100,
                        "height": 80,
                        "location": "L1",
                        "date_captured": "2021-06-03",
                        "day_night": "day",
                    }
                ],
                "annotations": [
                    {"id": 1, "image_id": "a", "category_id": 7, "bbox": [5, 7, 10, 4]}
                ],
                "categories": [{"id": 7, "name": "deerlike"}],
            }
        ).encode()
        records = parse_annotations(data)
        assert len(records) == 1
        rec = records[0]
        assert rec.boxes == (BBox(5.0, 7.0, 10.0, 4.0),)
        assert rec.class_label == "deerlike"
        assert rec.date == dt.date(2021, 6, 3)

    def test_round_trip_200_records(self):
        records, _ = surrogate_records(200, seed=11)
        emitted = emit_annotations(records)
        parsed = parse_annotations(emitted)
        assert parsed == records
        # idempotence: emit . parse . emit is stable byte-for-byte
        assert emit_annotations(parsed) == emitted

    def test_emit_deterministic_bytes(self):
        records, _ = surrogate_records(50, seed=3)
        assert emit_annotations(records) == emit_annotations(list(records))

    def test_malformed_json_reports_offset(self):
        with pytest.raises(AnnotationParseError) as err:
            parse_annotations(b'{"images": [}')
        assert err.value.offset is not None

    def test_unknown_image_reference(self):
        data = json.dumps(
            {
                "images": [],
                "annotations": [
                    {"id": 1, "image_id": "ghost", "category_id": 1, "bbox": [0, 0, 1, 1]}
                ],
                "categories": [{"id": 1, "name": "x"}],
            }
        ).encode()
        with pytest.raises(IntegrityError, match="ghost"):
            parse_annotations(data)

    def test_unknown_category_reference(self):
        data = json.dumps(
            {
                "images": [
                    {"id": "a", "file_name": "a.png", "width": 10, "height": 10,
                     "location": "L", "date_captured": "2021-06-02"}
                ],
                "annotations": [
                    {"id": 1, "image_id": "a", "category_id": 99, "bbox": [0, 0, 2, 2]}
                ],
                "categories": [{"id": 1, "name": "x"}],
            }
        ).encode()
        with pytest.raises(IntegrityError, match="99"):
            parse_annotations(data)

    def test_box_outside_bounds_names_image(self):
        data = json.dumps(
            {
                "images": [
                    {"id": "badbox", "file_name": "a.png", "width": 10, "height": 10,
                     "location": "L", "date_captured": "2021-06-02"}
                ],
                "annotations": [
                    {"id": 1, "image_id": "badbox", "category_id": 1, "bbox": [8, 8, 5, 5]}
                ],
                "categories": [{"id": 1, "name": "x"}],
            }
        ).encode()
        with pytest.raises(ValidationError, match="badbox"):
            parse_annotations(data)

    def test_emit_rejects_duplicate_ids(self):
        rec = make_record("dup")
        with pytest.raises(IntegrityError):
            emit_annotations([rec, rec])

    def test_bbox_invariants(self):
        with pytest.raises(ValidationError):
            BBox(0, 0, 0.5, 2).validate(100, 100)
        with pytest.raises(ValidationError):
            make_record("oob", boxes=((250.0, 250.0, 10.0, 10.0),))


class TestBuildSplit:
    def test_forced_tiny_assignment(self):
        records = [
            make_record("trans1", location="B", day=4),
            make_record("cisodd", location="A", day=3),
            make_record("ciseven1", location="A", day=2),
            make_record("ciseven2", location="A", day=4),
        ]
        split = build_split(records, trans_locations={"B"}, cis_val_fraction=0.05, seed=1)
        # the single trans location doubles as the trans-val location
        assert split.trans_val == {"trans1"}
        assert split.cis_test == {"cisodd"}
        assert split.train == {"ciseven1", "ciseven2"}

    def test_determinism(self):
        records, locations = surrogate_records(400, seed=2)
        a = build_split(records, trans_locations=locations[:5], seed=9)
        b = build_split(records, trans_locations=locations[:5], seed=9)
        assert a == b
        c = build_split(records, trans_locations=locations[:5], seed=10)
        assert a.train != c.train

    def test_invariants_on_2000_record_corpus(self):
        records, locations = surrogate_records(2000, n_locations=20, seed=7)
        split = build_split(
            records,
            trans_locations=locations[10:],
            excluded_classes={"cls4"},
            cis_val_fraction=0.05,
            seed=13,
        )
        assert check_split_invariants(split, records) == []
        # excluded class images appear nowhere
        covered = split.all_ids()
        for rec in records:
            if rec.class_label == "cls4":
                assert rec.image_id not in covered

    def test_95_5_even_day_partition(self):
        records, locations = surrogate_records(2000, n_locations=20, seed=7)
        split = build_split(records, trans_locations=locations[10:], seed=13)
        n_even = len(split.train) + len(split.cis_val)
        assert abs(len(split.cis_val) - round(0.05 * n_even)) <= 1

    def test_trans_val_designation(self):
        records, locations = surrogate_records(500, seed=4)
        trans = locations[:4]
        split = build_split(records, trans_locations=trans,
                            trans_val_locations=[trans[2]], seed=0)
        index = {r.image_id: r for r in records}
        assert {index[i].location_id for i in split.trans_val} == {trans[2]}
        with pytest.raises(SplitError):
            build_split(records, trans_locations=trans,
                        trans_val_locations=[locations[10]], seed=0)

    def test_cis_trans_conflict_rejected(self):
        records, locations = surrogate_records(100, seed=5)
        with pytest.raises(SplitError, match="both cis and trans"):
            build_split(records, trans_locations=locations[:3],
                        cis_locations=locations[2:6], seed=0)

    def test_unknown_trans_location(self):
        records, _ = surrogate_records(100, seed=5)
        with pytest.raises(SplitError):
            build_split(records, trans_locations={"nowhere"}, seed=0)

    def test_empty_train_rejected(self):
        records = [make_record("only", location="A", day=3)]  # odd day -> cis_test
        with pytest.raises(SplitError, match="empty training set"):
            build_split(records, trans_locations=set(), seed=0)


class TestClassStats:
    def test_night_fraction_arithmetic(self):
        records = [
            make_record(f"d{i}", cls="deerlike", night=(i < 4), day=2) for i in range(10)
        ]
        split = build_split(records, trans_locations=set(), cis_val_fraction=0.01, seed=0)
        stats = class_stats(split, records)
        assert stats.counts["train"]["deerlike"] == 10
        assert stats.night_fractions["train"]["deerlike"] == pytest.approx(0.4)

    def test_empty_class_absent(self):
        records = [make_record("a", day=2)]
        split = build_split(records, trans_locations=set(), cis_val_fraction=0.01, seed=0)
        stats = class_stats(split, records)
        assert "ghost" not in stats.counts["train"]
        assert stats.counts["cis_test"] == {}

    def test_dangling_id_rejected(self):
        records = [make_record("a", day=2)]
        split = build_split(records, trans_locations=set(), cis_val_fraction=0.01, seed=0)
        import dataclasses

        bad = dataclasses.replace(split, train=frozenset({"a", "ghost"}))
        with pytest.raises(IntegrityError, match="ghost"):
            class_stats(bad, records)


def _sim_pool(n: int, night_count: int) -> list:
    return [
        make_record(f"sim{i:05d}", cls="cervid", night=(i < night_count),
                    source="trapcam_unity")
        for i in range(n)
    ]


class TestComposeTrainingSet:
    def _split_and_records(self):
        records = [make_record(f"r{i}", day=2) for i in range(20)]
        split = build_split(records, trans_locations=set(), cis_val_fraction=0.05, seed=0)
        return split, records

    def test_zero_sim_is_identity(self):
        split, records = self._split_and_records()
        composed = compose_training_set(split, records, [], 0, 0.5, seed=1)
        assert {r.image_id for r in composed} == set(split.train)

    def test_exact_night_quota(self):
        split, records = self._split_and_records()
        pool = _sim_pool(300, 150)
        composed = compose_training_set(split, records, pool, 100, 0.5, seed=1)
        sim = [r for r in composed if r.source != "real"]
        assert len(sim) == 100
        assert sum(1 for r in sim if r.day_night == "night") == 50

    @pytest.mark.parametrize("n,frac", [(7, 0.5), (10, 0.33), (99, 0.49), (1, 1.0)])
    def test_quota_rounding_rule(self, n, frac):
        split, records = self._split_and_records()
        pool = _sim_pool(200, 120)
        composed = compose_training_set(split, records, pool, n, frac, seed=2)
        sim = [r for r in composed if r.source != "real"]
        assert sum(1 for r in sim if r.day_night == "night") == night_quota(n, frac)

    def test_whole_pool_draw_no_duplicates(self):
        split, records = self._split_and_records()
        pool = _sim_pool(60, 30)
        composed = compose_training_set(split, records, pool, 60, 0.5, seed=3)
        sim_ids = [r.image_id for r in composed if r.source != "real"]
        # multiset difference oracle: drawing the whole pool appends each exactly once
        assert sorted(sim_ids) == sorted(r.image_id for r in pool)

    def test_nested_selections(self):
        split, records = self._split_and_records()
        pool = _sim_pool(500, 250)
        small = compose_training_set(split, records, pool, 40, 0.5, seed=4)
        large = compose_training_set(split, records, pool, 300, 0.5, seed=4)
        small_ids = {r.image_id for r in small}
        large_ids = {r.image_id for r in large}
        assert small_ids <= large_ids

    def test_shortfall_names_mode(self):
        split, records = self._split_and_records()
        pool = _sim_pool(100, 10)
        with pytest.raises(PoolError, match="night"):
            compose_training_set(split, records, pool, 100, 0.5, seed=5)

    def test_real_portion_untouched(self):
        split, records = self._split_and_records()
        pool = _sim_pool(50, 25)
        composed = compose_training_set(split, records, pool, 20, 0.5, seed=6)
        real = [r for r in composed if r.source == "real"]
        index = {r.image_id: r for r in records}
        assert all(r == index[r.image_id] for r in real)

    def test_determinism(self):
        split, records = self._split_and_records()
        pool = _sim_pool(200, 100)
        a = compose_training_set(split, records, pool, 80, 0.5, seed=7)
        b = compose_training_set(split, records, pool, 80, 0.5, seed=7)
        assert a == b


class TestOversample:
    def _train(self, n_rare: int = 44) -> list:
        train = [make_record(f"c{i}", cls="common", day=2) for i in range(100)]
        train += [make_record(f"r{i}", cls="rare", day=2) for i in range(n_rare)]
        return train

    def test_identity_at_current_count(self):
        train = self._train()
        assert oversample(train, "rare", 44, seed=0) == train

    def test_each_original_twice_at_double(self):
        train = self._train()
        out = oversample(train, "rare", 88, seed=0)
        rare = [r for r in out if r.class_label == "rare"]
        assert len(rare) == 88
        by_path: dict[str, int] = {}
        for r in rare:
            by_path[r.file_path] = by_path.get(r.file_path, 0) + 1
        assert set(by_path.values()) == {2}

    def test_appended_paths_subset_of_originals(self):
        train = self._train()
        out = oversample(train, "rare", 100, seed=1)
        rare = [r for r in out if r.class_label == "rare"]
        assert len(rare) == 100
        original_paths = {r.file_path for r in train if r.class_label == "rare"}
        assert {r.file_path for r in rare} <= original_paths
        # duplicates carry unique suffixed ids and a dup index
        ids = [r.image_id for r in out]
        assert len(ids) == len(set(ids))
        assert all(r.dup_index > 0 for r in rare if "#dup" in r.image_id)

    def test_absent_class_rejected(self):
        with pytest.raises(ValidationError):
            oversample(self._train(), "ghost", 10, seed=0)

    def test_target_below_current_rejected(self):
        with pytest.raises(ValidationError):
            oversample(self._train(), "rare", 10, seed=0)


class TestDrawSimRecords:
    def test_prefix_property_over_many_sizes(self):
        pool = _sim_pool(300, 150)
        previous: set = set()
        for n in (0, 1, 5, 20, 100, 300):
            ids = {r.image_id for r in draw_sim_records(pool, n, 0.5, seed=9)}
            assert previous <= ids
            previous = ids
