# svl/constants.py
"""
Centralized constants, choices, and defaults for the SVL engine.
Reduces duplication across the engine modules, config parsing, and commands.
"""

import math

# Encoder variants
VARIANT_POINTNET = "pointnet"
VARIANT_POINTFORMER = "pointformer"

VARIANT_CHOICES = [
    (VARIANT_POINTNET, "Spike PointNet"),
    (VARIANT_POINTFORMER, "Spike PointFormer"),
]

# Neuron firing modes
FIRING_INTEGER = "integer"
FIRING_HEAVISIDE = "heaviside"

FIRING_CHOICES = [
    (FIRING_INTEGER, "Integer LIF (round and clip)"),
    (FIRING_HEAVISIDE, "Binary LIF (threshold)"),
]

# Elementwise op kinds
EW_ADD = "add"
EW_SUB = "sub"
EW_MUL = "mul"
EW_SCALE = "scale"
EW_SQUARE = "square"

EW_KINDS = (EW_ADD, EW_SUB, EW_MUL, EW_SCALE, EW_SQUARE)

# Reduction kinds
REDUCE_SUM = "sum"
REDUCE_MEAN = "mean"
REDUCE_MAX = "max"

REDUCE_KINDS = (REDUCE_SUM, REDUCE_MEAN, REDUCE_MAX)

# Energy trace kinds
TRACE_ENCODE_MAC = "encode_mac"
TRACE_SPIKE_AC = "spike_ac"
TRACE_HEAD_MAC = "head_mac"

TRACE_KIND_CHOICES = [
    (TRACE_ENCODE_MAC, "First coding layer (MAC)"),
    (TRACE_SPIKE_AC, "Spike-driven layer (AC)"),
    (TRACE_HEAD_MAC, "Zero-shot head (MAC)"),
]

MAC_TRACE_KINDS = (TRACE_ENCODE_MAC, TRACE_HEAD_MAC)

# 45nm energy per scalar operation, picojoules
E_MAC_PJ = 4.6
E_AC_PJ = 0.9

PICOJOULE = 1e-12

# Embedding provider modes
PROVIDER_FILE = "file"
PROVIDER_MOCK = "mock"

PROVIDER_CHOICES = [
    (PROVIDER_FILE, "Precomputed SVLT files"),
    (PROVIDER_MOCK, "Deterministic mock"),
]

# Learning-rate schedules ("onecycle" runs as warmup + cosine)
SCHEDULE_COSINE = "cosine"
SCHEDULE_ONECYCLE = "onecycle"

SCHEDULE_CHOICES = [
    (SCHEDULE_COSINE, "Linear warmup + cosine decay"),
    (SCHEDULE_ONECYCLE, "One-cycle (warmup + cosine)"),
]

# Numerical tolerances
NORM_EPS = 1e-12

# AdamW moments
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

GRAD_CLIP_NORM = 5.0

# Pretraining defaults (desk scale; paper-scale batches are 1024-4096)
DEFAULT_EPOCHS = 200
DEFAULT_BATCH_SIZE = 64
DEFAULT_BASE_LR = 2e-3
DEFAULT_WEIGHT_DECAY = 1e-4
DEFAULT_WARMUP_EPOCHS = 10

# Temperature: scale = exp(log_temp), clamped to [e^-1, 100]
DEFAULT_LOG_TEMP = math.log(1 / 0.07)
LOG_TEMP_MIN = -1.0
LOG_TEMP_MAX = math.log(100.0)

# Encoder / data defaults
DEFAULT_EMBED_DIM = 512
DEFAULT_POINTS = 256
DEFAULT_CENTERS = 32
DEFAULT_NEIGHBORS = 8
DEFAULT_HOLDOUT = 0.25
DEFAULT_IMAGE_NOISE = 0.1

# SVLT tensor file layout
SVLT_MAGIC = b"SVLT"
SVLT_VERSION = 1
SVLT_DTYPE_FLOAT64 = 0

# Artifact file names
HEAD_TENSOR_FILE = "head.svlt"
HEAD_LABELS_FILE = "head.labels.json"
PARAMS_MANIFEST_FILE = "manifest.json"
TRAIN_STATE_FILE = "train_state.json"
LOSS_HISTORY_FILE = "loss_history.csv"
ACCURACY_CURVE_FILE = "accuracy_curve.csv"
ZEROSHOT_REPORT_FILE = "zeroshot_report.json"
ENERGY_REPORT_FILE = "energy_report.json"
EVENT_CSV_HEADER = ("t", "x", "y", "p")
