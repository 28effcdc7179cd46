"""Link-level toolkit for grant-free uplink power-domain NOMA: pilot-framed
signal model, SIC benchmark detector, an LSTM-based multi-user detector with
its dataset/training pipeline, and a Monte Carlo evaluation harness."""

from .channel import (
    NoiseConfig,
    PowerProfile,
    draw_channels,
    draw_noise,
    superimpose,
)
from .framing import (
    BPSK_CONSTELLATION,
    PILOT_VALUE,
    FrameConfig,
    build_frame,
    demodulate_bpsk,
    frame_ratio,
    modulate_bpsk,
)
from .sic import (
    ChannelEstimate,
    SicResult,
    estimate_channels_ls,
    ml_point,
    perfect_estimate,
    sic_detect,
)
from .dataset import (
    Dataset,
    generate_dataset,
    load_dataset,
    reform_inputs,
    restore_frame,
    save_dataset,
)
from .training import TrainConfig, TrainedModel, Trainer, detect, train
from .checkpoint import load_checkpoint, resume_trainer, save_checkpoint
from .evaluation import (
    BerReport,
    CapacityReport,
    SimScenario,
    bpsk_rayleigh_ber_oracle,
    complexity_report,
    ensured_capacity,
    monte_carlo_ber,
    wilson_interval,
    write_ber_csv,
    write_capacity_csv,
    write_plot_description,
)

__version__ = "0.1.0"
