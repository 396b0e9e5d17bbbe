import collections
import random

import pytest

from refdial.templates import (
    AllCandidatesRejectedError,
    InvalidTemplateError,
    MissingBindingError,
    Template,
    TemplateRegistry,
    TemplateSet,
    TaskKind,
    TASK_PLACEHOLDERS,
    UnknownTaskError,
    builtin_template_sets,
    default_registry,
    expand_via_endpoint,
    instantiate,
    load_template_sets,
    save_template_sets,
    validate_template,
)

REC_BODY = "In the given <image>, could you find and tell me the coordinates of <expr>?"


def rec_template(tid="rec-000", body=REC_BODY):
    return Template(task=TaskKind.REC, id=tid, body=body)


class TestValidation:
    def test_starter_rec_row_is_valid(self):
        validate_template(rec_template())

    def test_missing_required_placeholder(self):
        with pytest.raises(InvalidTemplateError, match="missing"):
            validate_template(rec_template(body="Find it in <image>, please."))

    def test_unknown_placeholder_for_task(self):
        with pytest.raises(InvalidTemplateError, match="not used"):
            validate_template(
                rec_template(body="In <image>, where is <expr>? Also <question>")
            )

    def test_literal_angle_text_is_not_a_placeholder(self):
        # "<imagery>" contains no exact token, so it is plain text
        t = Template(
            task=TaskKind.REC,
            id="rec-lit",
            body="Use your <imagery> to find <expr> in <image>.",
        )
        validate_template(t)

    def test_duplicate_ids(self):
        s = TemplateSet(task=TaskKind.REC, variants=(rec_template(), rec_template()))
        registry = TemplateRegistry()
        with pytest.raises(InvalidTemplateError, match="duplicate"):
            registry.register_set(s)

    def test_empty_set(self):
        with pytest.raises(InvalidTemplateError, match="empty"):
            TemplateRegistry().register_set(TemplateSet(task=TaskKind.REC, variants=()))


class TestRegistry:
    def test_register_and_sample_single(self):
        registry = TemplateRegistry()
        registry.register_set(TemplateSet(task=TaskKind.REC, variants=(rec_template(),)))
        for seed in range(10):
            assert registry.sample(TaskKind.REC, seed).id == "rec-000"

    def test_unknown_task(self):
        with pytest.raises(UnknownTaskError):
            TemplateRegistry().sample(TaskKind.REC, 0)

    def test_sample_uniform(self):
        variants = tuple(
            Template(task=TaskKind.REC, id=f"rec-{i:03d}", body=REC_BODY) for i in range(100)
        )
        registry = TemplateRegistry()
        registry.register_set(TemplateSet(task=TaskKind.REC, variants=variants))
        counts = collections.Counter(
            registry.sample(TaskKind.REC, seed).id for seed in range(10_000)
        )
        # oracle: uniform sampling statistics, 1% +/- 1% absolute
        assert len(counts) == 100
        for freq in counts.values():
            assert abs(freq / 10_000 - 0.01) <= 0.01

    def test_sample_pure_in_seed(self):
        registry = default_registry()
        a = registry.sample(TaskKind.VQA_QA, 1234)
        b = registry.sample(TaskKind.VQA_QA, 1234)
        assert a == b

    def test_reregistration_replaces(self):
        registry = TemplateRegistry()
        registry.register_set(TemplateSet(task=TaskKind.REC, variants=(rec_template(),)))
        replacement = rec_template(tid="rec-new")
        registry.register_set(TemplateSet(task=TaskKind.REC, variants=(replacement,)))
        assert registry.sample(TaskKind.REC, 0).id == "rec-new"


class TestInstantiate:
    def test_paper_rec_row(self):
        got = instantiate(
            rec_template(),
            {"<image>": "<image>", "<expr>": "the red umbrella"},
        )
        assert got == (
            "In the given <image>, could you find and tell me the coordinates of the red umbrella?"
        )

    def test_no_placeholders(self):
        t = Template(task=TaskKind.CAPTIONING, id="c", body="Describe this image <image>.")
        assert instantiate(t, {"<image>": "IMG"}) == "Describe this image IMG."

    def test_missing_binding(self):
        t = Template(
            task=TaskKind.POINTQA,
            id="p",
            body="Referring to point <objs> in image <image>, answer '<question>'",
        )
        with pytest.raises(MissingBindingError) as err:
            instantiate(t, {"<image>": "IMG", "<question>": "how many?"})
        assert err.value.placeholder == "<objs>"

    def test_single_pass_no_recursion(self):
        t = rec_template()
        got = instantiate(t, {"<image>": "IMG", "<expr>": "literal <expr> text"})
        assert got.count("<expr>") == 1  # injected by the binding, not re-expanded

    def test_no_residual_tokens_property(self):
        rng = random.Random(0)
        registry = default_registry()
        bindings = {
            "<image>": "IMG",
            "<expr>": "the red umbrella",
            "<objs>": "[0.100, 0.200, 0.400, 0.600]",
            "<question>": "how many cats?",
        }
        for task in TaskKind:
            for _ in range(20):
                template = registry.sample(task, rng.randrange(2**31))
                text = instantiate(template, bindings)
                for token in TASK_PLACEHOLDERS[task]:
                    assert token not in text or bindings[token].count(token)


class TestBuiltin:
    def test_every_task_has_a_starter(self):
        tasks = {s.task for s in builtin_template_sets()}
        assert tasks == set(TaskKind)

    def test_table_tasks_have_three_variants(self):
        by_task = {s.task: s for s in builtin_template_sets()}
        for task in (
            TaskKind.CAPTIONING,
            TaskKind.SPOTTING_CAPTION,
            TaskKind.GROUNDING_CAPTION,
            TaskKind.REG,
            TaskKind.VQA_QA,
            TaskKind.VQA_QCA,
            TaskKind.VQA_QCPOINTA,
            TaskKind.VQA_QCBOXA,
            TaskKind.REC,
        ):
            assert len(by_task[task].variants) == 3

    def test_all_starters_validate(self):
        default_registry()  # registration validates every set

    def test_round_trip_storage(self, tmp_path):
        path = tmp_path / "templates.jsonl"
        sets = builtin_template_sets()
        save_template_sets(sets, path)
        loaded = load_template_sets(path)
        assert {s.task: s.variants for s in loaded} == {s.task: s.variants for s in sets}


class FakeClient:
    def __init__(self, texts):
        self.texts = texts
        self.prompts = []

    def generate(self, prompt, n):
        self.prompts.append(prompt)
        return self.texts


class TestExpansion:
    def test_accepts_valid_rewrites(self):
        client = FakeClient(
            [
                "Point out <expr> within <image> for me.",
                "Where exactly is <expr> in the picture <image>?",
                "Mark the location of <expr> in <image>.",
            ]
        )
        result = expand_via_endpoint(rec_template(), "locate a described object", 3, client)
        assert result.accepted == 3 and result.requested == 3
        assert len(result.templates.variants) == 3
        assert result.rejected == []

    def test_rejects_candidate_dropping_placeholder(self):
        client = FakeClient(
            [
                "Point out <expr> within <image> for me.",
                "Where is the thing in the picture <image>?",  # dropped <expr>
            ]
        )
        result = expand_via_endpoint(rec_template(), "locate", 2, client)
        assert result.accepted == 1
        assert len(result.rejected) == 1 and "missing" in result.rejected[0][1]

    def test_all_rejected(self):
        client = FakeClient(["nothing useful", ""])
        with pytest.raises(AllCandidatesRejectedError):
            expand_via_endpoint(rec_template(), "locate", 2, client)

    def test_dedupes(self):
        body = "Point out <expr> within <image> for me."
        client = FakeClient([body, body])
        result = expand_via_endpoint(rec_template(), "locate", 2, client)
        assert result.accepted == 1

    def test_output_subset_of_candidates(self):
        texts = [
            "Point out <expr> within <image> for me.",
            "Where exactly is <expr> in the picture <image>?",
        ]
        client = FakeClient(texts)
        result = expand_via_endpoint(rec_template(), "locate", 2, client)
        assert {t.body for t in result.templates.variants} <= set(texts)
