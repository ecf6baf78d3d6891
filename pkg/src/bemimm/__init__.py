"""BEM-based doubly-selective OFDM channel tracking with Kalman filters and IMM."""

from .bem import BasisKind, BemBasis, build_measurement_matrix, make_basis, project_taps, reconstruct_taps
from .channel import ChannelProfile, ChannelRealization, coefficient_transfer, generate_bem_channel
from .config import SimConfig, load_config
from .errors import AcquisitionError, ConfigError, FilterError, StatisticsError
from .harness import MseReport, run_experiment, sigma_w2_from_ebn0
from .imm import ImmOutput, ImmState, imm_step
from .kalman import ArModel, KalmanState, derive_ar_model, jakes_ar_model, ls_acquire, predict, update
from .receiver import FrameResult, ImmEstimator, SingleKF, compute_mse, run_frame, stationary_prior

__version__ = "0.1.0"
