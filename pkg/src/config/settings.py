"""Configuration settings for the FedOC simulator"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Get the project root directory (assuming settings.py is in src/config/)
PROJECT_ROOT = Path(__file__).parent.parent.parent

load_dotenv(PROJECT_ROOT / ".env")

DATA_DIR = Path(os.getenv("FEDOC_DATA_DIR", str(PROJECT_ROOT / "data")))
OUTPUT_DIR = Path(os.getenv("FEDOC_OUTPUT_DIR", str(PROJECT_ROOT / "runs")))
DEFAULT_LOG_LEVEL = os.getenv("FEDOC_LOG_LEVEL", "INFO")

# Algorithm options (display name -> engine key)
ALGORITHM_OPTIONS = {
    "FedOC (Fastest)": "fedoc_fastest",
    "FedOC (Fixed)": "fedoc_fixed",
    "HFL": "hfl",
    "FedMES": "fedmes",
    "FL-EOCD": "fleocd",
}
ALGORITHM_LABELS = {key: label for label, key in ALGORITHM_OPTIONS.items()}
ALGORITHM_LABELS["fedavg"] = "FedAvg"

# Topology defaults
DEFAULT_NUM_SERVERS = 3
DEFAULT_NUM_CLIENTS = 60
DEFAULT_OVERLAP_SIZES = [10, 10]
DEFAULT_CELL_RADIUS_M = 600.0
DEFAULT_OVERLAP_FRACTION = 0.25
DEFAULT_ROC_POLICY = "random"

# Dataset and partition defaults
DEFAULT_DATASET = "synthetic"
DEFAULT_MNIST_SUBSET = 6000
DEFAULT_SYNTHETIC_CLASSES = 10
DEFAULT_SYNTHETIC_DIM = 20
DEFAULT_SYNTHETIC_PER_CLASS = 200
DEFAULT_SYNTHETIC_SPREAD = 0.5
DEFAULT_TEST_FRACTION = 0.2
DEFAULT_CLASSES_PER_CLIENT = 2
DEFAULT_CLASSES_PER_CELL = 5

# Training defaults
DEFAULT_EPOCHS = 5
DEFAULT_ROUNDS = 500
DEFAULT_BATCH_SIZE = 20
DEFAULT_LEARNING_RATE = 0.01
DEFAULT_LR_DECAY = 0.995
DEFAULT_HIDDEN_UNITS = 27
DEFAULT_EVAL_INTERVAL = 10

# Channel defaults
DEFAULT_BANDWIDTH_HZ = 50e6
DEFAULT_CLIENT_POWER_W = 1.0
DEFAULT_ES_POWER_W = 5.0
DEFAULT_NOISE_PSD_DBM_HZ = -174.0
PATHLOSS_INTERCEPT_DB = 128.1
PATHLOSS_SLOPE_DB = 37.6
RAYLEIGH_POWER_FLOOR = 1e-6
DEFAULT_CLOUD_RATIO = 10.0
DEFAULT_COMPUTE_TIME_RANGE = [0.1, 0.2]
BITS_PER_PARAMETER = 64
REFERENCE_MODEL_PARAMETERS = 21840

# Sweep defaults
DEFAULT_KAPPA_GRID = ["1", "10", "50", "250", "inf"]
DEFAULT_TARGET_ACCURACY = 0.90
DEFAULT_TIME_BUDGET_S = 1600.0

# Desk-scale caps applied by --desk-scale
DESK_SCALE_SAMPLES = 6000
DESK_SCALE_TEST_SAMPLES = 2000
DESK_SCALE_ROUNDS = 100

# Bound check defaults
DEFAULT_LIPSCHITZ_SAFETY = 2.0
DEFAULT_LIPSCHITZ_FLOOR = 1e-8
