"""Constants: activation initialisations, training protocol, file formats."""

from pathlib import Path

PROJECT_NAME = "lowpass"

REPO_ROOT = Path(__file__).resolve().parent.parent.parent
SEVERITY_TABLE_PATH = REPO_ROOT / "configs" / "severity.ini"

ENV_DATA_ROOT = "LOWPASS_DATA_ROOT"
ENV_SEVERITY_TABLE = "LOWPASS_SEVERITY_TABLE"
DEFAULT_DATA_ROOT = "data"

# ── Activations ───────────────────────────────────────────

ACTIVATION_KINDS = [
    "relu", "leaky_relu", "p_relu", "clipped_relu", "tent",
    "log_tailed_relu", "tanh", "swish", "lp_relu1", "lp_relu2",
]

LP1_INIT = {"A": 6.0, "alpha": 0.05}
LP2_INIT = {"A": 5.0, "B": 8.1, "alpha": 0.05, "beta": 0.05 / 3}
LEAKY_SLOPE = 0.01
PRELU_INIT = 0.25
CLIPPED_INIT = 6.0
LOG_TAILED_INIT = 6.0
TENT_DELTA = 1.0
SWISH_BETA = 1.0

# Which parameters train by default, per kind
DEFAULT_LEARNABLE = {
    "p_relu":   {"alpha": True},
    "lp_relu1": {"A": True, "alpha": False},
    "lp_relu2": {"A": True, "B": True, "alpha": True, "beta": True},
    "swish":    {"beta": False},
}

CUTOFF_BUFFER = 0.1   # minimum B - A after projection
PROJECTION_EPS = 1e-3

# ── Training protocol ─────────────────────────────────────

EPOCHS = 160
BATCH_SIZE = 128
LEARNING_RATE = 0.1
MOMENTUM = 0.9
L2 = 5e-4
LR_SCHEDULE = [(50, 0.2), (100, 0.2), (140, 0.2)]
VAL_FRACTION = 0.15

ARCH_ALIASES = {"fig8": "cnn3", "fig8_fc2": "cnn3_fc2"}
ARCHITECTURES = ["cnn3", "cnn3_fc2", "mlp", *ARCH_ALIASES]

# ── DCT augmentation ──────────────────────────────────────

DCT_T_MIN = 0.0
DCT_T_MAX = 0.5

# ── Corruptions ───────────────────────────────────────────

SEVERITY_LEVELS = 5
SEQUENCE_FRAMES = 30

NOISE_KINDS = ["gaussian_noise", "shot_noise", "impulse_noise", "speckle_noise"]
BLUR_KINDS = ["gaussian_blur", "defocus_blur", "motion_blur", "zoom_blur"]
DIGITAL_KINDS = ["contrast", "brightness", "pixelate", "jpeg_like"]
CORRUPTION_KINDS = NOISE_KINDS + BLUR_KINDS + DIGITAL_KINDS

FREQ_CLASS = {
    **{k: "HFc" for k in NOISE_KINDS},
    **{k: "LFc" for k in BLUR_KINDS},
    **{k: "mixed" for k in DIGITAL_KINDS},
}

# ── Analysis ──────────────────────────────────────────────

HIST_BINS = 100
HIST_PERCENTILE = 99.9
DEPTH_LEVELS = 4
FREQ_BANDS = 16

SWEEP_DTHETA = 0.01
SWEEP_RADIUS_QUANTILE = 0.99
TRIP_SCORE = 0.5
BISECT_STEPS = 40

# ── Files ─────────────────────────────────────────────────

CHECKPOINT_MAGIC = b"LPRL"
CHECKPOINT_VERSION = 1
TRAIN_LOG_HEADER = ["epoch", "split", "loss", "top1", "lr"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# ── Command line ──────────────────────────────────────────

CHECKPOINT_NAME = "checkpoint.lprl"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
PREVIEW_IMAGES = 16
