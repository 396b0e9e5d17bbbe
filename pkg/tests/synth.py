"""Synthetic annotation factories for pipeline tests."""

import json
import random

from refdial.coords import ImageSize
from refdial.records import AnnotationKind, ImageKey, SourceAnnotation

NOUNS = [
    "red umbrella",
    "blue bicycle",
    "tall lamp",
    "wooden bench",
    "striped cat",
    "green bottle",
    "paper kite",
    "leather chair",
    "glass vase",
    "brick wall",
]

ANSWERS = ["yes", "no", "two", "three", "blue", "red", "left", "right"]


def image_key(i, collection="synthcoll", content_hash=None):
    return ImageKey(collection=collection, image_id=f"img{i:05d}", content_hash=content_hash)


def rand_size(rng):
    return ImageSize(rng.randint(200, 1600), rng.randint(200, 1600))


def rand_pixel_box(rng, size):
    x0 = rng.randint(0, size.width - 2)
    x1 = rng.randint(x0 + 1, size.width)
    y0 = rng.randint(0, size.height - 2)
    y1 = rng.randint(y0 + 1, size.height)
    return [x0, y0, x1, y1]


def rand_pixel_point(rng, size):
    return [rng.randint(0, size.width), rng.randint(0, size.height)]


def _annotation(rng, i, kind, payload):
    return SourceAnnotation(
        image=image_key(i),
        size=rand_size(rng),
        kind=kind,
        payload=payload,
        source_line=i + 1,
    )


def referring_expression(rng, i):
    size = rand_size(rng)
    return SourceAnnotation(
        image=image_key(i),
        size=size,
        kind=AnnotationKind.REFERRING_EXPRESSION,
        payload={"expression": rng.choice(NOUNS), "box": rand_pixel_box(rng, size)},
        source_line=i + 1,
    )


def region_caption(rng, i):
    size = rand_size(rng)
    return SourceAnnotation(
        image=image_key(i),
        size=size,
        kind=AnnotationKind.REGION_CAPTION,
        payload={"caption": f"a {rng.choice(NOUNS)} by the window", "box": rand_pixel_box(rng, size)},
        source_line=i + 1,
    )


def entity_caption(rng, i, n_entities=2):
    size = rand_size(rng)
    names = rng.sample(NOUNS, n_entities)
    sentence = "The photo shows " + " next to ".join(f"a {n}" for n in names) + "."
    entities = [{"name": n, "box": rand_pixel_box(rng, size)} for n in names]
    return SourceAnnotation(
        image=image_key(i),
        size=size,
        kind=AnnotationKind.ENTITY_CAPTION,
        payload={"sentence": sentence, "entities": entities},
        source_line=i + 1,
    )


def pointqa(rng, i, use_point=True):
    size = rand_size(rng)
    payload = {
        "question": f"What color is the {rng.choice(NOUNS)} here?",
        "answer": rng.choice(ANSWERS),
    }
    if use_point:
        payload["point"] = rand_pixel_point(rng, size)
    else:
        payload["box"] = rand_pixel_box(rng, size)
    return SourceAnnotation(
        image=image_key(i), size=size, kind=AnnotationKind.POINTQA, payload=payload, source_line=i + 1
    )


def mc_boxqa(rng, i):
    size = rand_size(rng)
    return SourceAnnotation(
        image=image_key(i),
        size=size,
        kind=AnnotationKind.MC_BOXQA,
        payload={
            "question": f"Which box holds the {rng.choice(NOUNS)}?",
            "options": [rand_pixel_box(rng, size) for _ in range(4)],
            "correct_index": rng.randrange(4),
        },
        source_line=i + 1,
    )


def cot_qa(rng, i, n_objects=2, with_points=True, with_boxes=True):
    size = rand_size(rng)
    names = rng.sample(NOUNS, n_objects)
    chain = "I can see " + " and ".join(f"a {n}" for n in names) + " in the scene."
    objects = []
    for n in names:
        obj = {"name": n}
        if with_points:
            obj["point"] = rand_pixel_point(rng, size)
        if with_boxes:
            obj["box"] = rand_pixel_box(rng, size)
        objects.append(obj)
    return SourceAnnotation(
        image=image_key(i),
        size=size,
        kind=AnnotationKind.COT_QA,
        payload={
            "question": f"How many of the objects near the {names[0]} are visible?",
            "chain": chain,
            "objects": objects,
            "answer": str(n_objects),
        },
        source_line=i + 1,
    )


def caption(rng, i):
    return _annotation(
        rng, i, AnnotationKind.CAPTION, {"caption": f"a scene with a {rng.choice(NOUNS)}"}
    )


def vqa(rng, i):
    majority = rng.choice(ANSWERS)
    answers = [majority] * 6 + [rng.choice(ANSWERS) for _ in range(4)]
    rng.shuffle(answers)
    return _annotation(
        rng,
        i,
        AnnotationKind.VQA,
        {"question": f"Is there a {rng.choice(NOUNS)}?", "answers": answers},
    )


def annotation_to_json(ann: SourceAnnotation) -> dict:
    return {
        "image": ann.image.to_json(),
        "size": {"width": ann.size.width, "height": ann.size.height},
        "kind": ann.kind.value,
        "payload": ann.payload,
    }


def write_annotations(annotations, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(annotation_to_json(ann), ensure_ascii=False) + "\n")


def make_batch(factory, n, seed=0, start=0, **kwargs):
    rng = random.Random(seed)
    return [factory(rng, start + i, **kwargs) for i in range(n)]
