"""Task prompt templates: storage, seeded sampling, instantiation, expansion.

Templates carry angle-bracket placeholders from a closed set (<image>,
<expr>, <objs>, <question>). Detection is exact-token match, so literal
text like "<imagery>" passes through untouched. Each task kind has a fixed
placeholder signature; a starter set ships for every kind so the data
pipeline runs before any endpoint-assisted expansion.
"""

from __future__ import annotations

import json
import random
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence


class TaskKind(str, Enum):
    CAPTIONING = "captioning"
    SPOTTING_CAPTION = "spotting_caption"
    GROUNDING_CAPTION = "grounding_caption"
    REG = "reg"
    REC = "rec"
    VQA_QA = "vqa_qa"
    VQA_QCA = "vqa_qca"
    VQA_QCPOINTA = "vqa_qcpointa"
    VQA_QCBOXA = "vqa_qcboxa"
    POINTQA = "pointqa"
    POINTQA_V7W = "pointqa_v7w"
    RD = "rd"
    CHESSBOARD = "chessboard"


IMAGE = "<image>"
EXPR = "<expr>"
OBJS = "<objs>"
QUESTION = "<question>"

PLACEHOLDERS = (IMAGE, EXPR, OBJS, QUESTION)
_PLACEHOLDER_RE = re.compile("|".join(re.escape(p) for p in PLACEHOLDERS))

# placeholder signature per task; templates must contain exactly these tokens
TASK_PLACEHOLDERS: dict[TaskKind, frozenset] = {
    TaskKind.CAPTIONING: frozenset({IMAGE}),
    TaskKind.SPOTTING_CAPTION: frozenset({IMAGE}),
    TaskKind.GROUNDING_CAPTION: frozenset({IMAGE, OBJS}),
    TaskKind.REG: frozenset({IMAGE, OBJS}),
    TaskKind.REC: frozenset({IMAGE, EXPR}),
    TaskKind.VQA_QA: frozenset({IMAGE, QUESTION}),
    TaskKind.VQA_QCA: frozenset({IMAGE, QUESTION}),
    TaskKind.VQA_QCPOINTA: frozenset({IMAGE, QUESTION}),
    TaskKind.VQA_QCBOXA: frozenset({IMAGE, QUESTION}),
    TaskKind.POINTQA: frozenset({IMAGE, OBJS, QUESTION}),
    TaskKind.POINTQA_V7W: frozenset({IMAGE, OBJS, QUESTION}),
    TaskKind.RD: frozenset({IMAGE, QUESTION}),
    TaskKind.CHESSBOARD: frozenset({IMAGE, EXPR}),
}


class TemplateError(ValueError):
    pass


class InvalidTemplateError(TemplateError):
    pass


class UnknownTaskError(TemplateError):
    pass


class MissingBindingError(TemplateError):
    def __init__(self, placeholder: str):
        super().__init__(f"no binding for placeholder {placeholder}")
        self.placeholder = placeholder


class AllCandidatesRejectedError(TemplateError):
    pass


@dataclass(frozen=True)
class Template:
    task: TaskKind
    id: str
    body: str

    def placeholders(self) -> set:
        return set(_PLACEHOLDER_RE.findall(self.body))


def validate_template(template: Template) -> None:
    """Check the body against the task's placeholder signature."""
    required = TASK_PLACEHOLDERS[template.task]
    found = template.placeholders()
    missing = required - found
    extra = found - required
    problems = []
    if missing:
        problems.append(f"missing placeholders: {', '.join(sorted(missing))}")
    if extra:
        problems.append(f"placeholders not used by {template.task.value}: {', '.join(sorted(extra))}")
    if not template.body.strip():
        problems.append("empty body")
    if problems:
        raise InvalidTemplateError(f"template {template.id!r}: " + "; ".join(problems))


@dataclass(frozen=True)
class TemplateSet:
    task: TaskKind
    variants: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))


def validate_set(template_set: TemplateSet) -> None:
    if not template_set.variants:
        raise InvalidTemplateError(f"empty template set for {template_set.task.value}")
    ids = [t.id for t in template_set.variants]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise InvalidTemplateError(f"duplicate template ids: {', '.join(dupes)}")
    for template in template_set.variants:
        if template.task != template_set.task:
            raise InvalidTemplateError(
                f"template {template.id!r} is for {template.task.value}, set is {template_set.task.value}"
            )
        validate_template(template)


class TemplateRegistry:
    """Task -> template set store. Registration replaces atomically;
    reads never see a partially updated set."""

    def __init__(self):
        self._sets: dict[TaskKind, TemplateSet] = {}
        self._lock = threading.Lock()

    def register_set(self, template_set: TemplateSet) -> None:
        validate_set(template_set)
        with self._lock:
            self._sets[template_set.task] = template_set

    def get_set(self, task: TaskKind) -> TemplateSet:
        try:
            return self._sets[task]
        except KeyError:
            raise UnknownTaskError(f"no template set registered for task {task.value!r}") from None

    def tasks(self) -> list[TaskKind]:
        return list(self._sets)

    def sample(self, task: TaskKind, seed: int) -> Template:
        """Uniform seeded choice over the task's variants; pure in (set, seed)."""
        variants = self.get_set(task).variants
        return variants[random.Random(seed).randrange(len(variants))]


def instantiate(template: Template, bindings: Mapping[str, str]) -> str:
    """Fill every placeholder with its binding, literally and in one pass."""

    def replace(match: re.Match) -> str:
        token = match.group(0)
        if token not in bindings:
            raise MissingBindingError(token)
        return bindings[token]

    return _PLACEHOLDER_RE.sub(replace, template.body)


# ---------------------------------------------------------------------------
# endpoint-assisted expansion

# Reconstructed rewriting instructions (the original ones were never
# published): describe the task's purpose, show the sample, ask for variants.
EXPANSION_PROMPT = (
    "You write prompt templates for a vision-language assistant.\n"
    "Task purpose: {purpose}\n"
    "Here is a sample template:\n"
    "{body}\n"
    "Rewrite it in rich, varied language {count} times. Every rewrite must keep "
    "these placeholder tokens exactly as written: {placeholders}. "
    "Return one rewrite per line, nothing else."
)


@dataclass
class ExpansionResult:
    templates: TemplateSet
    requested: int
    accepted: int
    rejected: list  # (candidate text, reason)


def expand_via_endpoint(
    seed_template: Template,
    purpose: str,
    count: int,
    client,
    prompt_template: str = EXPANSION_PROMPT,
) -> ExpansionResult:
    """Grow a template set by asking a generation endpoint for rewrites.

    Only candidates that pass the template invariants and deduplication are
    kept; nothing is fabricated locally, so an endpoint failure propagates and
    a fully rejected batch raises AllCandidatesRejectedError. The rewriting
    instructions are an overridable artifact, not fixed behavior.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    validate_template(seed_template)
    prompt = prompt_template.format(
        purpose=purpose,
        body=seed_template.body,
        count=count,
        placeholders=", ".join(sorted(TASK_PLACEHOLDERS[seed_template.task])),
    )
    candidates = client.generate(prompt, count)

    accepted: list[Template] = []
    rejected: list = []
    seen_bodies = set()
    for i, candidate in enumerate(candidates):
        body = candidate.strip()
        if not body:
            rejected.append((candidate, "empty candidate"))
            continue
        if body in seen_bodies:
            rejected.append((candidate, "duplicate of an accepted candidate"))
            continue
        template = Template(task=seed_template.task, id=f"{seed_template.id}-x{i:03d}", body=body)
        try:
            validate_template(template)
        except InvalidTemplateError as exc:
            rejected.append((candidate, str(exc)))
            continue
        seen_bodies.add(body)
        accepted.append(template)
    if not accepted:
        raise AllCandidatesRejectedError(
            f"endpoint returned {len(candidates)} candidates, none passed validation"
        )
    template_set = TemplateSet(task=seed_template.task, variants=tuple(accepted))
    validate_set(template_set)
    return ExpansionResult(
        templates=template_set,
        requested=count,
        accepted=len(accepted),
        rejected=rejected,
    )


# ---------------------------------------------------------------------------
# line-delimited storage: one {task, id, body} object per line

def save_template_sets(sets: Iterable[TemplateSet], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for template_set in sets:
            for t in template_set.variants:
                fh.write(json.dumps({"task": t.task.value, "id": t.id, "body": t.body}, ensure_ascii=False))
                fh.write("\n")


def load_template_sets(path) -> list[TemplateSet]:
    by_task: dict[TaskKind, list[Template]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                task = TaskKind(obj["task"])
                template = Template(task=task, id=str(obj["id"]), body=str(obj["body"]))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise TemplateError(f"{path}:{line_no}: bad template record: {exc}") from exc
            by_task.setdefault(task, []).append(template)
    return [TemplateSet(task=task, variants=tuple(ts)) for task, ts in by_task.items()]


# ---------------------------------------------------------------------------
# starter sets

_STARTERS: dict[TaskKind, Sequence[str]] = {
    TaskKind.CAPTIONING: (
        "Describe this image <image> as simply as possible.",
        "What is the content of the image <image>? Please answer in short sentences.",
        "Summarize the content of the photo <image>.",
    ),
    TaskKind.SPOTTING_CAPTION: (
        "Can you provide a description of the image <image> and include the coordinates "
        "[x0,y0,x1,y1] for each mentioned object?",
        "Please explain what's happening in the photo <image> and give coordinates "
        "[xmin,ymin,xmax,ymax] for the items you reference.",
        "How would you describe the contents of the image <image>? Please provide the "
        "positions of mentioned objects in square brackets.",
    ),
    TaskKind.GROUNDING_CAPTION: (
        "Can you give me a description of the region <objs> in image <image>?",
        "Describe what's happening within the coordinates <objs> of the given image <image>.",
        "What does the area <objs> within the given visual <image> contain?",
    ),
    TaskKind.REG: (
        "For the given image <image>, can you provide a unique description of the area <objs>?",
        "In the photo <image>, how would you describe the selected area <objs> uniquely?",
        "Can you provide a description for the region <objs> in the image <image> such that "
        "it sets it apart from others?",
    ),
    TaskKind.VQA_QA: (
        "I want to know the answer to '<question>' Refer to the image <image> and give a clear response.",
        "Answer this question directly after referring to the image <image>: <question>",
        "Examine the image <image> and provide a brief answer for '<question>'",
    ),
    TaskKind.VQA_QCA: (
        "Having a look at image <image>, can you tell me the answer to my question '<question>' "
        "and the logic leading to it?",
        "Please answer the following question '<question>' based on the image <image>, and "
        "describe your thought process",
        "Upon analyzing the image <image>, please find the answer to my question '<question>' "
        "and provide a detailed explanation.",
    ),
    TaskKind.VQA_QCPOINTA: (
        "Analyze the image <image> and answer '<question>' Include your reasoning process and "
        "mark center points of related objects as [cx, cy].",
        "Based on <image>, please respond to '<question>' Include your thought process and note "
        "involved objects using [cx, cy] for their center points.",
        "While observing image <image>, kindly answer '<question>' Elaborate on your reasoning "
        "process and tag any object center points involved [x,y].",
    ),
    TaskKind.VQA_QCBOXA: (
        "<question> Please offer your reasoning process, and provide bounding boxes of mentioned "
        "objects within square brackets. Here is the picture <image>",
        "Please explain your reasoning and provide bounding boxes, denoted by square brackets, "
        "for the objects mentioned in the picture <image>. <question>",
        "Consider the image <image>, and then provide a well-reasoned answer to the question "
        "'<question>' Don't forget to mark relevant object locations using [x0,y0,x1,y1].",
    ),
    TaskKind.REC: (
        "In the given <image>, could you find and tell me the coordinates of <expr>?",
        "I need the coordinates of <expr> in <image>, can you please assist me with that?",
        "Locate <expr> in <image> and provide its coordinates, please.",
    ),
    TaskKind.POINTQA: (
        "Referring to point <objs> in image <image>, give a direct answer to '<question>'",
    ),
    TaskKind.POINTQA_V7W: (
        "Given the image <image>, answer '<question>' by choosing one box from the candidates <objs>.",
    ),
    TaskKind.RD: ("<image> <question>",),
    TaskKind.CHESSBOARD: (
        "<image> Which part is <expr> in if the picture is divided equally into four 2 by 2 "
        "parts? Choose from: (A) Top-left (B) Top-right (C) Bottom-left (D) Bottom-right.",
    ),
}


def builtin_template_sets() -> list[TemplateSet]:
    sets = []
    for task, bodies in _STARTERS.items():
        variants = tuple(
            Template(task=task, id=f"{task.value}-{i:03d}", body=body)
            for i, body in enumerate(bodies)
        )
        sets.append(TemplateSet(task=task, variants=variants))
    return sets


def default_registry() -> TemplateRegistry:
    """Registry preloaded with the starter set for every task kind."""
    registry = TemplateRegistry()
    for template_set in builtin_template_sets():
        registry.register_set(template_set)
    return registry
