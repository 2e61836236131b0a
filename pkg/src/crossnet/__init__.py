"""Cross-target stance classification.

A conditional-BiLSTM + self-attention classifier with its two reference
baselines, trained and evaluated over stratified cross-validation, built on
a small float64 autodiff engine whose LSTM kernels run under numba (with a
pure-numpy fallback, see crossnet.kernels).
"""

from .autodiff import TensorNode, backward, gradient_check, no_grad
from .corpus import (
    EmbeddingMatrix,
    Instance,
    Vocabulary,
    build_embeddings,
    build_vocabulary,
    load_semeval,
    stratified_folds,
    tokenize,
)
from .evaluation import (
    ConfusionCounts,
    EvalReport,
    TransferResult,
    f1_scores,
    paired_t_test,
    run_cross_target,
    run_in_target,
    transfer_ratio,
)
from .models import (
    Architecture,
    ModelConfig,
    ModelParams,
    Prediction,
    StanceModel,
    aspect_attention,
    bilstm_encode,
    conditional_encode,
    forward,
    lstm_step,
    predict_head,
)
from .rng import Rng
from .training import AdamState, TrainConfig, TrainHistory, adam_step, batch_loss, train

__version__ = "0.1.0"
