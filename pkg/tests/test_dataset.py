"""Tokenizer and keyword-transfer dataset construction."""

import random
from collections import Counter

import pytest

from aescap import attributes as attrs
from aescap.corpus import AttributedRecord, RawRecord
from aescap.dataset import (KeywordTable, assign_attributes, build_dataset,
                            dataset_stats, mine_keywords, render_stats_table,
                            split_dataset)
from aescap.errors import ContractError, DataError
from aescap.text import tokenize


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_lowercase_punctuation_synonyms(self):
        # lowercase, strip "!", colours -> color
        assert tokenize("Great Colours!") == ["great", "color"]

    def test_stopwords_removed(self):
        assert tokenize("the light and the sky") == ["light", "sky"]

    def test_prepositions_and_adverbs_removed(self):
        assert tokenize("focus of the eyes is very sharp here") == ["focus", "eyes", "is", "sharp"]

    def test_custom_lists(self):
        assert tokenize("foo bar", stopwords={"bar"}, synonyms={}) == ["foo"]


def _table(entries):
    return KeywordTable(entries={a: [(kw, 1) for kw in kws] for a, kws in entries.items()})


class TestAssignAttributes:
    def test_depth_of_field_comment(self):
        # Keyword lists without generic impression words, so only one hit.
        table = _table({
            attrs.DEPTH_OF_FIELD: ["depth", "field", "focus"],
            attrs.GENERAL_IMPRESSION: ["impression", "general"],
        })
        assert assign_attributes("nice depth of field here", table) == {attrs.DEPTH_AND_FOCUS}

    def test_multi_membership(self):
        table = _table({
            attrs.COMPOSITION_SRC: ["composition", "lines"],
            attrs.GENERAL_IMPRESSION: ["great", "nice"],
        })
        got = assign_attributes("great composition and nice lines", table)
        assert got == {attrs.COMPOSITION, attrs.IMPRESSION_AND_SUBJECT}

    def test_no_keywords(self):
        table = _table({attrs.FOCUS: ["focus"]})
        assert assign_attributes("hello world", table) == set()

    def test_output_is_subset_of_merged_attributes(self):
        table = _table({a: [f"kw{i}"] for i, a in enumerate(attrs.SOURCE_ATTRIBUTES)})
        comment = " ".join(f"kw{i}" for i in range(len(attrs.SOURCE_ATTRIBUTES)))
        got = assign_attributes(comment, table)
        assert got == set(attrs.ATTRIBUTES)

    def test_monotone_under_added_tokens(self):
        table = _table({
            attrs.FOCUS: ["sharp", "focus"],
            attrs.COLOR_LIGHTING: ["light", "color"],
        })
        rng = random.Random(5)
        pool = ["sharp", "focus", "light", "color", "tree", "dog", "cloud"]
        for _ in range(50):
            words = [rng.choice(pool) for _ in range(rng.randrange(0, 6))]
            before = assign_attributes(" ".join(words), table)
            words.append(rng.choice(["sharp", "light"]))
            after = assign_attributes(" ".join(words), table)
            assert before <= after


def _teacher_record(i, captions):
    return AttributedRecord(image_id=f"t{i}", captions=captions,
                            scores={}, global_score=None)


class TestMineKeywords:
    def test_reference_composition_ranking(self):
        # Fixture frequencies mirror the reference ranking for the composition
        # attribute: composition > left > perspective > shot > lines.
        weights = {"composition": 12, "left": 8, "perspective": 6, "shot": 4, "lines": 3,
                   "tree": 2, "dog": 1}
        words = []
        for word, n in weights.items():
            words.extend([word] * n)
        records = [_teacher_record(0, {attrs.COMPOSITION_SRC: [" ".join(words)]})]
        table = mine_keywords(records, k=5)
        assert [kw for kw, _ in table.entries[attrs.COMPOSITION_SRC]] == [
            "composition", "left", "perspective", "shot", "lines"]

    def test_hand_counted(self):
        records = [_teacher_record(0, {attrs.FOCUS: ["focus focus sharp"]})]
        table = mine_keywords(records, k=2)
        assert table.entries[attrs.FOCUS] == [("focus", 2), ("sharp", 1)]

    def test_k_zero(self):
        records = [_teacher_record(0, {attrs.FOCUS: ["focus"]})]
        table = mine_keywords(records, k=0)
        assert table.entries[attrs.FOCUS] == []

    def test_negative_k_rejected(self):
        with pytest.raises(ContractError):
            mine_keywords([], k=-1)

    def test_empty_attribute_warned_and_omitted(self):
        records = [_teacher_record(0, {attrs.FOCUS: ["sharp focus"]})]
        table = mine_keywords(records, k=5)
        assert attrs.COLOR_LIGHTING not in table.entries
        assert any("color_lighting" in w for w in table.warnings)

    def test_tie_break_lexicographic(self):
        records = [_teacher_record(0, {attrs.FOCUS: ["zebra apple zebra apple mango"]})]
        table = mine_keywords(records, k=3)
        assert table.entries[attrs.FOCUS] == [("apple", 2), ("zebra", 2), ("mango", 1)]

    def test_frequencies_match_brute_force_counting(self):
        rng = random.Random(9)
        vocab = ["light", "sky", "dark", "glow", "lamp", "sun"]
        captions = [" ".join(rng.choice(vocab) for _ in range(rng.randrange(1, 8)))
                    for _ in range(30)]
        records = [_teacher_record(i, {attrs.COLOR_LIGHTING: [c]}) for i, c in enumerate(captions)]
        table = mine_keywords(records, k=len(vocab))

        brute = Counter()
        for c in captions:
            brute.update(tokenize(c))
        assert dict(table.entries[attrs.COLOR_LIGHTING]) == dict(brute)

    def test_json_roundtrip(self):
        records = [_teacher_record(0, {attrs.FOCUS: ["focus focus sharp"]})]
        table = mine_keywords(records, k=2)
        again = KeywordTable.from_json(table.to_json())
        assert again.entries == table.entries


@pytest.fixture
def small_table():
    return _table({
        attrs.COLOR_LIGHTING: ["light", "color"],
        attrs.COMPOSITION_SRC: ["composition", "lines"],
        attrs.FOCUS: ["sharp", "focus"],
    })


class TestBuildDataset:
    def test_keyword_free_record_dropped(self, small_table):
        raw = [RawRecord("a", ["hello there"]), ]
        assert build_dataset(raw, small_table) == []

    def test_drop_count(self, small_table):
        raw = [
            RawRecord("a", ["lovely light"]),
            RawRecord("b", ["nothing relevant"]),
            RawRecord("c", ["sharp focus", "good lines"]),
        ]
        out = build_dataset(raw, small_table)
        assert [r.image_id for r in out] == ["a", "c"]

    def test_multi_attribute_comment_duplicated(self, small_table):
        raw = [RawRecord("a", ["sharp light"])]
        out = build_dataset(raw, small_table)
        assert out[0].captions[attrs.COLOR_AND_LIGHTING] == ["sharp light"]
        assert out[0].captions[attrs.DEPTH_AND_FOCUS] == ["sharp light"]

    def test_duplicate_image_id_rejected(self, small_table):
        raw = [RawRecord("dup", ["light"]), RawRecord("dup", ["light"])]
        with pytest.raises(DataError, match="dup"):
            build_dataset(raw, small_table)

    def test_drops_iff_every_comment_unassigned(self, small_table):
        rng = random.Random(3)
        pool = ["light", "lines", "sharp", "tree", "dog", "hello"]
        raw = [RawRecord(f"r{i}", [" ".join(rng.choice(pool) for _ in range(3))
                                   for _ in range(rng.randrange(1, 4))])
               for i in range(40)]
        out = {r.image_id for r in build_dataset(raw, small_table)}
        for record in raw:
            any_hit = any(assign_attributes(c, small_table) for c in record.comments)
            assert (record.image_id in out) == any_hit

    def test_carries_global_score(self, small_table):
        raw = [RawRecord("a", ["nice light"], global_score=7.5)]
        assert build_dataset(raw, small_table)[0].global_score == 7.5


def _weak_records(n, attr_lists):
    records = []
    for i in range(n):
        captions = {a: [f"caption {i} {a}"] for a in attr_lists[i % len(attr_lists)]}
        records.append(AttributedRecord(image_id=f"w{i}", captions=captions))
    return records


class TestSplitDataset:
    def test_sizes_and_disjointness(self):
        records = _weak_records(10, [[attrs.COLOR_AND_LIGHTING]])
        splits = split_dataset(records, val_n=2, test_n=2, seed=1)
        split = splits.per_attribute[attrs.COLOR_AND_LIGHTING]
        assert (len(split.train), len(split.val), len(split.test)) == (6, 2, 2)
        ids = [r.image_id for part in (split.train, split.val, split.test) for r in part]
        assert len(ids) == len(set(ids)) == 10

    def test_same_seed_identical(self):
        records = _weak_records(30, [[attrs.COMPOSITION], [attrs.COMPOSITION, attrs.USE_OF_CAMERA]])
        a = split_dataset(records, 4, 4, seed=7)
        b = split_dataset(records, 4, 4, seed=7)
        for attr in attrs.ATTRIBUTES:
            assert [r.image_id for r in a.per_attribute[attr].val] == \
                   [r.image_id for r in b.per_attribute[attr].val]
            assert [r.image_id for r in a.per_attribute[attr].test] == \
                   [r.image_id for r in b.per_attribute[attr].test]

    def test_different_seeds_differ(self):
        records = _weak_records(100, [[attrs.COMPOSITION]])
        a = split_dataset(records, 20, 20, seed=1)
        b = split_dataset(records, 20, 20, seed=2)
        ids_a = {r.image_id for r in a.per_attribute[attrs.COMPOSITION].val}
        ids_b = {r.image_id for r in b.per_attribute[attrs.COMPOSITION].val}
        assert ids_a != ids_b

    def test_partition_property(self):
        rng = random.Random(11)
        records = []
        for i in range(60):
            chosen = rng.sample(attrs.ATTRIBUTES, rng.randrange(1, 4))
            records.append(AttributedRecord(
                image_id=f"p{i}", captions={a: ["x"] for a in chosen}))
        splits = split_dataset(records, 5, 5, seed=3)
        for attr in attrs.ATTRIBUTES:
            members = {r.image_id for r in records if r.captions.get(attr)}
            split = splits.per_attribute[attr]
            train = {r.image_id for r in split.train}
            val = {r.image_id for r in split.val}
            test = {r.image_id for r in split.test}
            assert train | val | test == members
            assert not (train & val) and not (train & test) and not (val & test)

    def test_proportional_fallback_reported(self):
        records = _weak_records(6, [[attrs.USE_OF_CAMERA]])
        splits = split_dataset(records, val_n=10, test_n=10, seed=0)
        split = splits.per_attribute[attrs.USE_OF_CAMERA]
        assert len(split.val) + len(split.test) <= 3
        assert len(split.train) >= 3
        assert any("use_of_camera" in w for w in splits.warnings)

    def test_negative_sizes_rejected(self):
        with pytest.raises(ContractError):
            split_dataset([], -1, 2)


class TestDatasetStats:
    def test_empty(self):
        stats = dataset_stats([])
        assert stats.total_images == 0 and stats.total_comments == 0
        assert all(s.images == 0 and s.average == 0.0 for s in stats.per_attribute.values())

    def test_average(self):
        records = [
            AttributedRecord("a", {attrs.COMPOSITION: ["c"] * 4}),
            AttributedRecord("b", {attrs.COMPOSITION: ["c"] * 6}),
        ]
        stats = dataset_stats(records)
        assert stats.per_attribute[attrs.COMPOSITION].average == 5.00
        assert stats.per_attribute[attrs.COMPOSITION].images == 2
        assert stats.per_attribute[attrs.COMPOSITION].comments == 10

    def test_render_contains_all_attributes(self):
        text = render_stats_table(dataset_stats([]))
        for attr in attrs.ATTRIBUTES:
            assert attrs.DISPLAY_NAMES[attr] in text
        assert "Total" in text


class TestMergeMap:
    def test_total_over_source_attributes(self):
        for src in attrs.SOURCE_ATTRIBUTES:
            assert attrs.merge_attribute(src) in attrs.ATTRIBUTES

    def test_merge_pairs(self):
        assert attrs.merge_attribute(attrs.DEPTH_OF_FIELD) == attrs.DEPTH_AND_FOCUS
        assert attrs.merge_attribute(attrs.FOCUS) == attrs.DEPTH_AND_FOCUS
        assert attrs.merge_attribute(attrs.GENERAL_IMPRESSION) == attrs.IMPRESSION_AND_SUBJECT
        assert attrs.merge_attribute(attrs.SUBJECT_OF_PHOTO) == attrs.IMPRESSION_AND_SUBJECT
        assert attrs.merge_attribute(attrs.COLOR_LIGHTING) == attrs.COLOR_AND_LIGHTING

    def test_unknown_rejected(self):
        with pytest.raises(KeyError):
            attrs.merge_attribute("bokeh")
