from .network import (
    LayerSpec,
    Network,
    build_repnet_s,
    extract_representation,
    forward_logits,
    gradient_wrt_input,
    gradient_wrt_params,
    he_uniform_init,
    infer_shapes,
    repnet_s,
)
from .optim import OptimState, sgd_step
from .tensor import (
    DTYPE,
    NonFiniteError,
    ShapeError,
    Tensor,
    conv2d,
    cross_entropy,
    global_avg_pool,
    l2_norm,
    linear,
    log_softmax,
    maxpool2d,
)

__all__ = [
    "DTYPE", "LayerSpec", "Network", "NonFiniteError", "OptimState", "ShapeError", "Tensor",
    "build_repnet_s", "conv2d", "cross_entropy", "extract_representation", "forward_logits",
    "global_avg_pool", "gradient_wrt_input", "gradient_wrt_params", "he_uniform_init",
    "infer_shapes", "l2_norm", "linear", "log_softmax", "maxpool2d", "repnet_s", "sgd_step",
]
