"""Set prediction toolkit.

A Bayesian cardinality model (negative binomial with analytic gradients),
a trainable cardinality head, sequential set-MAP inference, random finite
set sampling, cardinality-constrained adaptive NMS, and the matching
multi-label and detection evaluation metrics.
"""

from .cardloss import (
    AlphaBeta,
    HeadWeights,
    LossGrad,
    card_grad,
    card_nll,
    head_backward,
    head_forward,
    regression_loss,
)
from .cardnet import (
    MLPModel,
    TrainConfig,
    TrainingSample,
    forward,
    gradient_check,
    init_model,
    load_model,
    loss_and_grads,
    predict_count,
    save_model,
    train,
)
from .detect import (
    BoxDetection,
    MatchResult,
    NMSConfig,
    adaptive_nms,
    detection_f1,
    greedy_nms,
    iou,
    log_avg_miss_rate,
    match_detections,
)
from .errors import ConfigError, DataError, NumericError, SetnetError
from .mlmetrics import (
    EvalRecord,
    LabelSet,
    MetricSummary,
    aggregate,
    f1_score,
    mce,
    precision_recall,
    predicted_k_eval,
    topk_sweep,
)
from .numerics import (
    GammaParams,
    NegBinParams,
    PoissonParams,
    digamma,
    gamma_log_pdf,
    log_gamma,
    nb_log_pmf,
    nb_mean,
    nb_mode,
    nb_pmf_truncated,
    poisson_log_pmf,
)
from .setinfer import (
    CardinalityPMF,
    PredictedSet,
    ScoredElements,
    map_set,
    sample_rfs,
    sequential_map,
    vector_set_factor,
)
from .synth import (
    BoxImage,
    MultilabelSample,
    ParamMap,
    SynthConfig,
    counting_default_maps,
    gen_boxes,
    gen_counting,
    gen_multilabel,
    multilabel_default_maps,
)

__version__ = "0.1.0"
