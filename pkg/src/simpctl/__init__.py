"""Toolkit for controllable text simplification experiments: corpus
splitting, control-token tagging, automatic metrics, discrete
control-value search, and human-evaluation tooling."""

from .corpus import Corpus, SentencePair, SplitResult, filter_one_to_zero, load_corpus, split
from .conllu import DepSentence, DepToken, TreeBank, parse_conllu, tree_depth
from .control_tokens import (
    BucketSpec,
    CtVector,
    DEFAULT_BUCKET_SPEC,
    FrequencyTable,
    annotate_corpus,
    annotate_pair,
    bucketize,
    dtd_ratio,
    length_ratio,
    replace_only_levenshtein_sim,
    word_rank_ratio,
)
from .metrics import MetricReport, bleu, evaluate_system, rouge_l, rouge_n, sari, semantic_f1
from .ct_search import (
    Candidate,
    LrMode,
    PredictorModel,
    SearchSpace,
    fit_lr_predictor,
    grid_search,
    objective,
    one_plus_lambda_es,
    predict_lr,
)
from .agreement import (
    AssignmentPlan,
    Rating,
    RatingTable,
    assign_annotation,
    cohen_kappa,
    krippendorff_alpha,
    likert_means,
    to_outcomes,
)
from .bridge import PromptTemplate, SimplifierSpec, builtin_mocks, simplify_batch

__version__ = "0.1.0"
