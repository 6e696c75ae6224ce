"""
Configuration - Nonlocal Hölder Lab
Library-wide defaults; environment overrides via .env
"""

import math
import os
from dotenv import load_dotenv
from typing import Optional

load_dotenv()

# ===== RUNTIME =====
_threads_env: Optional[str] = os.getenv("NONLOCAL_THREADS")
try:
    NONLOCAL_THREADS = max(1, int(_threads_env)) if _threads_env else 1
except ValueError:
    raise ValueError("NONLOCAL_THREADS must be a positive integer")

LOG_LEVEL = os.getenv("NONLOCAL_LOG_LEVEL", "WARNING").upper()
LOG_FORMAT = os.getenv("NONLOCAL_LOG_FORMAT", "json").lower()  # json | text

# ===== GRIDS =====
DEFAULT_PERIOD = 2.0 * math.pi
DEFAULT_GRID_N = 1024

# ===== MODULI =====
INDEX_DEPTH = 20
INTEGER_GUARD = 0.02  # distance of an index to the nearest integer
BERNSTEIN_MAX_ORDER = 6
INVERT_RTOL = 1e-12
TAIL_RMAX_FACTOR = 2.0 ** 20

# ===== QUADRATURE =====
QUAD_RTOL = 1e-8
INNER_CUTOFF_CELLS = 4
SHELLS_PER_DECADE = 64
ANGLES = 16
TAIL_TOL = 1e-8
OUTER_CUTOFF = 2.0
TAYLOR_RADIUS = 0.25  # largest |xi|*h0 for the inner Taylor model
COMPENSATOR_GUARD = 0.02
FREEZING_RTOL = 1e-7  # band quadrature residual of the product rule, relative

# ===== HEAT KERNEL =====
SPECTRAL_TAIL = 1e-14
RINGING_TOL = 1e-8

# ===== EXPERIMENTS =====
CORPUS_SIZE = 32
STABILITY_TOL = 0.10
COVERAGE_LIMIT = 0.01

# ===== OUTPUT =====
CSV_FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"
REPORT_NAME = "report.json"
