from .layers import (
    DenseParams,
    LstmLayerParams,
    dense_backward,
    dense_forward,
    init_dense,
    init_lstm_layer,
    lstm_backward,
    lstm_forward,
)
from .loss import half_mse, half_mse_grad
from .network import (
    Network,
    backprop,
    closed_form_param_count,
    forward,
    init_network,
    network_astype,
    param_blocks,
    param_count,
)
from .optim import AdamState, adam_init, adam_step
from .gradcheck import gradient_check

__all__ = [
    "AdamState",
    "DenseParams",
    "LstmLayerParams",
    "Network",
    "adam_init",
    "adam_step",
    "backprop",
    "closed_form_param_count",
    "dense_backward",
    "dense_forward",
    "forward",
    "gradient_check",
    "half_mse",
    "half_mse_grad",
    "init_dense",
    "init_lstm_layer",
    "init_network",
    "network_astype",
    "param_blocks",
    "param_count",
]
