import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv(override=False)

# Randomness
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "2024"))

# Code construction
LIFTING_FACTOR = int(os.getenv("LIFTING_FACTOR", "10"))
BG2_ASSET = os.getenv(
    "BG2_ASSET",
    os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "assets", "bg2_ils2.csv"),
)

# Decoding
DECODE_P = float(os.getenv("DECODE_P", "0.17"))
DEFAULT_ITERATIONS = int(os.getenv("DEFAULT_ITERATIONS", "100"))
SP_CLAMP = float(os.getenv("SP_CLAMP", "30.0"))
NMS_ALPHA = float(os.getenv("NMS_ALPHA", "0.8"))
OMS_BETA = float(os.getenv("OMS_BETA", "0.3"))

# Monte Carlo
DEFAULT_FRAMES = int(os.getenv("DEFAULT_FRAMES", "10000"))
FRAME_CHUNK = int(os.getenv("FRAME_CHUNK", "256"))
WORKERS = int(os.getenv("WORKERS", "1"))

# Feature pipeline
DEFAULT_Q = int(os.getenv("DEFAULT_Q", "4"))
DEFAULT_TAU = float(os.getenv("DEFAULT_TAU", "0.235"))
KAPPA_QUANTILE = float(os.getenv("KAPPA_QUANTILE", "0.95"))
PERM_SEED = int(os.getenv("PERM_SEED", "1"))
MASK_SEED = int(os.getenv("MASK_SEED", "2"))
FEATURE_DIM = 512

# Training
TRAIN_P_LOW = float(os.getenv("TRAIN_P_LOW", "0.13"))
TRAIN_P_HIGH = float(os.getenv("TRAIN_P_HIGH", "0.19"))
TRAIN_FRAMES_PER_EPOCH = int(os.getenv("TRAIN_FRAMES_PER_EPOCH", "120"))
TRAIN_EPOCHS_PER_LAYER = int(os.getenv("TRAIN_EPOCHS_PER_LAYER", "10"))
TRAIN_STEP_SIZE = float(os.getenv("TRAIN_STEP_SIZE", "0.05"))
TRAIN_MOMENTUM = float(os.getenv("TRAIN_MOMENTUM", "0.9"))

# Synthetic populations
SYNTH_P_M = float(os.getenv("SYNTH_P_M", "0.156"))
SYNTH_P_NM = float(os.getenv("SYNTH_P_NM", "0.26"))

# Runtime
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
PROGRESS = os.getenv("PROGRESS", "1") not in ("0", "false", "False", "")
