from __future__ import annotations

import random

import pytest

from orderprobe import (
    LabeledExample,
    PromptTemplate,
    TemplateError,
    concat,
    extract,
    get_preset,
    linearize,
    load_template,
    render_input,
)
from orderprobe.templating import PRESETS, reject_colliding, scan

from conftest import random_sentence


@pytest.fixture
def inline():
    return get_preset("sst2_inline")


class TestLinearize:
    def test_review_sentiment_rendering(self, inline):
        x = LabeledExample(id="1", text_a="the greatest musicians", label=0)
        assert (
            linearize(x, True, inline)
            == "Review: the greatest musicians. Sentiment: positive"
        )

    def test_label_free_form_ends_at_label_slot(self, inline):
        x = LabeledExample(id="1", text_a="the greatest musicians", label=0)
        out = linearize(x, False, inline)
        assert out.endswith(". Sentiment: ")
        assert out == "Review: the greatest musicians. Sentiment: "

    def test_pair_template_three_lines(self):
        rte = get_preset("rte")
        x = LabeledExample(
            id="1",
            text_a="No Weapons of Mass Destruction Found in Iraq Yet.",
            text_b="Weapons of Mass Destruction Found in Iraq.",
            label=1,
        )
        assert linearize(x, True, rte) == (
            "premise: No Weapons of Mass Destruction Found in Iraq Yet.\n"
            "hypothesis: Weapons of Mass Destruction Found in Iraq.\n"
            "prediction: False"
        )

    def test_missing_text_b_on_pair_template(self):
        rte = get_preset("rte")
        x = LabeledExample(id="1", text_a="premise only", label=0)
        with pytest.raises(TemplateError):
            linearize(x, True, rte)

    def test_label_out_of_range(self, inline):
        x = LabeledExample(id="1", text_a="t", label=5)
        with pytest.raises(TemplateError):
            linearize(x, True, inline)


class TestConcat:
    def test_table_style_concatenation(self, inline):
        s1 = LabeledExample(id="1", text_a="the greatest musicians", label=0)
        s2 = LabeledExample(id="2", text_a="redundant concept", label=1)
        joined = concat([linearize(s1, True, inline), linearize(s2, True, inline)], inline)
        assert joined == (
            "Review: the greatest musicians. Sentiment: positive. "
            "Review: redundant concept. Sentiment: negative"
        )

    def test_single_part_identity(self, inline):
        assert concat(["one part"], inline) == "one part"

    def test_reversal_changes_string_not_parts(self, inline):
        parts = ["alpha", "beta"]
        fwd = concat(parts, inline)
        rev = concat(parts[::-1], inline)
        assert fwd != rev
        assert sorted(fwd.split(". ")) == sorted(rev.split(". "))

    def test_length_lower_bound(self, inline):
        parts = ["aa", "bbb", "c"]
        assert len(concat(parts, inline)) >= sum(len(p) for p in parts)

    def test_separator_join_associativity(self, inline):
        parts = ["aa", "bbb", "c"]
        assert concat(parts, inline) == concat([concat(parts[:2], inline), parts[2]], inline)
        assert concat(parts, inline) == concat([parts[0], concat(parts[1:], inline)], inline)

    def test_empty_parts_rejected(self, inline):
        with pytest.raises(TemplateError):
            concat([], inline)


class TestExtract:
    def test_round_trip_single_sample(self, basic_template):
        x = LabeledExample(id="1", text_a="solid craft throughout", label=1)
        pairs = extract(linearize(x, True, basic_template), basic_template)
        assert len(pairs) == 1
        assert pairs[0].text_a == "solid craft throughout"
        assert pairs[0].label_text == "positive"

    def test_two_full_segments_plus_truncated_third(self, basic_template):
        xs = [
            LabeledExample(id=str(i), text_a=t, label=i % 2)
            for i, t in enumerate(["first text", "second text", "third text"])
        ]
        rendered = [linearize(x, True, basic_template) for x in xs]
        full = concat(rendered, basic_template)
        truncated = full[: full.rfind(" type: ")]  # cut before the third label slot
        pairs = extract(truncated, basic_template)
        assert [p.text_a for p in pairs] == ["first text", "second text"]

    def test_garbage_yields_nothing(self, basic_template):
        assert extract("garbage with no prefixes", basic_template) == []

    def test_residue_reported(self, basic_template):
        x = LabeledExample(id="1", text_a="kept text", label=0)
        text = linearize(x, True, basic_template) + "\ninput: dangling"
        pairs, residue = scan(text, basic_template)
        assert len(pairs) == 1
        assert "dangling" in residue

    def test_trims_one_space_around_label(self, basic_template):
        pairs = extract("input: hello there type:  positive \n", basic_template)
        assert pairs[0].label_text == "positive"
        # only ONE space is trimmed per side
        pairs = extract("input: hello there type:   positive\n", basic_template)
        assert pairs[0].label_text == " positive"

    def test_sentence_never_contains_label_prefix(self, basic_template):
        rng = random.Random(0)
        for _ in range(200):
            blob = " ".join(
                rng.choice(["input:", "type:", "word", "другой", "\n", "x y"])
                for _ in range(12)
            )
            for pair in extract(blob, basic_template):
                assert basic_template.label_prefix not in pair.text_a

    def test_pair_round_trip(self):
        cb = get_preset("cb")
        x = LabeledExample(id="1", text_a="It was a complex language.", text_b="the language was peeled down", label=0)
        pairs = extract(linearize(x, True, cb), cb)
        assert pairs == [
            type(pairs[0])(
                text_a="It was a complex language.",
                text_b="the language was peeled down",
                label_text="true",
            )
        ]


ROUND_TRIP_CASES = sorted(set(PRESETS) - {"sst2_t1"})


class TestShippedPresets:
    @pytest.mark.parametrize("name", ROUND_TRIP_CASES)
    def test_round_trip_randomized(self, name):
        tpl = PRESETS[name]
        rng = random.Random(hash(name) & 0xFFFF)
        for i in range(100):
            text_a = random_sentence(rng, rng.randint(1, 8))
            text_b = random_sentence(rng, rng.randint(1, 6)) if tpl.is_pair else None
            label = rng.randrange(tpl.num_labels)
            x = LabeledExample(id=str(i), text_a=text_a, text_b=text_b, label=label)
            pairs = extract(linearize(x, True, tpl), tpl)
            assert len(pairs) == 1, name
            assert pairs[0].text_a == text_a
            assert pairs[0].text_b == text_b
            assert pairs[0].label_text == tpl.verbalizer[label]

    @pytest.mark.parametrize("name", ROUND_TRIP_CASES)
    def test_multi_sample_round_trip(self, name):
        tpl = PRESETS[name]
        rng = random.Random(42)
        xs = [
            LabeledExample(
                id=str(i),
                text_a=random_sentence(rng, 5),
                text_b=random_sentence(rng, 3) if tpl.is_pair else None,
                label=i % tpl.num_labels,
            )
            for i in range(4)
        ]
        blob = concat([linearize(x, True, tpl) for x in xs], tpl)
        pairs = extract(blob, tpl)
        assert [p.text_a for p in pairs] == [x.text_a for x in xs]
        assert [p.label_text for p in pairs] == [tpl.verbalizer[x.label] for x in xs]

    def test_expected_preset_roster(self):
        assert {
            "sst2",
            "sst5",
            "mr",
            "cr",
            "mpqa",
            "subj",
            "trec",
            "agnews",
            "dbpedia",
            "cb",
            "rte",
            "sst2_t1",
            "sst2_t2",
            "sst2_t3",
            "sst2_t4",
        } <= set(PRESETS)
        assert PRESETS["sst2_t1"] is PRESETS["sst2"]
        # capitalization is exact per task
        assert PRESETS["subj"].label_prefix == "\nType: "
        assert PRESETS["agnews"].label_prefix == "\ntype: "

    def test_empty_input_prefix_variant(self):
        tpl = PRESETS["sst2_t4"]
        x = LabeledExample(id="1", text_a="a crisp ride", label=0)
        assert linearize(x, True, tpl) == "a crisp ride It was good"
        y = LabeledExample(id="2", text_a="a slow ride", label=1)
        blob = concat([linearize(x, True, tpl), linearize(y, True, tpl)], tpl)
        pairs = extract(blob, tpl)
        assert [(p.text_a, p.label_text) for p in pairs] == [
            ("a crisp ride", "good"),
            ("a slow ride", "bad"),
        ]


class TestTemplateValidation:
    def test_label_prefix_required(self):
        with pytest.raises(TemplateError):
            PromptTemplate(name="t", input_prefix="in: ", label_prefix="", verbalizer=("a",))

    def test_verbalizer_must_be_distinct(self):
        with pytest.raises(TemplateError):
            PromptTemplate(
                name="t", input_prefix="in: ", label_prefix=" out: ", verbalizer=("a", "a")
            )

    def test_render_input_single_vs_pair(self, basic_template):
        assert render_input("hello", None, basic_template) == "input: hello type: "
        with pytest.raises(TemplateError):
            render_input("hello", "extra", basic_template)

    def test_collision_rejection_warns(self, basic_template, caplog):
        xs = [
            LabeledExample(id="1", text_a="clean text", label=0),
            LabeledExample(id="2", text_a="sneaky type: embedded", label=1),
        ]
        with caplog.at_level("WARNING"):
            kept, rejected = reject_colliding(xs, basic_template)
        assert [x.id for x in kept] == ["1"]
        assert rejected == 1
        assert "round-trip" in caplog.text


class TestTemplateFile:
    def test_load_yaml_template(self, tmp_path):
        path = tmp_path / "tpl.yaml"
        path.write_text(
            'name: custom\ninput_prefix: "Q: "\nlabel_prefix: "\\nA: "\n'
            'verbalizer: ["yes", "no"]\n',
            encoding="utf-8",
        )
        tpl = load_template(path)
        assert tpl.name == "custom"
        assert tpl.label_prefix == "\nA: "
        assert tpl.verbalizer == ("yes", "no")

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "tpl.yaml"
        path.write_text("verbalizer: [a, b]\nlabel_prefix: 'x: '\nbogus: 1\n", encoding="utf-8")
        with pytest.raises(TemplateError, match="bogus"):
            load_template(path)
