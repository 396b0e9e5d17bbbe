from .answers import (  # noqa: F401
    ANSWER_MARKER,
    ExtractedAnswer,
    WrongAnnotatorCountError,
    eval_short_answer,
    eval_vqa,
    extract_final_answer,
    normalize_answer,
    vqa_accuracy,
)
from .cider import CiderResult, MissingReferencesError, cider  # noqa: F401
from .pope import (  # noqa: F401
    PopeCounts,
    eval_pope,
    metrics_from_counts,
    metrics_from_pairs,
    parse_yes_no,
)
from .rec import (  # noqa: F401
    DEFAULT_IOU_THRESHOLD,
    choose_box,
    eval_rec,
    eval_which_box,
    iou,
    which_box_verdict,
)
from .report import (  # noqa: F401
    EvalError,
    EvalReport,
    PredictionRecord,
    load_predictions,
    render_table,
    save_predictions,
)
