"""Numerical configuration settings."""

import os
from dotenv import load_dotenv

load_dotenv()

# Verification Configuration
TOLERANCE = float(os.getenv("DYNBAXTER_TOLERANCE", 1e-9))
SAMPLES = int(os.getenv("DYNBAXTER_SAMPLES", 50))
SEED = int(os.getenv("DYNBAXTER_SEED", 42))
MAX_RESAMPLES = int(os.getenv("DYNBAXTER_MAX_RESAMPLES", 100))
POLE_THRESHOLD = float(os.getenv("DYNBAXTER_POLE_THRESHOLD", 1e-8))
INVERSE_CUTOFF = float(os.getenv("DYNBAXTER_INVERSE_CUTOFF", 1e-10))

# Elliptic Configuration
NOME = complex(os.getenv("DYNBAXTER_NOME", "0.05"))
HALF_PERIOD = float(os.getenv("DYNBAXTER_HALF_PERIOD", 1.0))
CROSSING = complex(os.getenv("DYNBAXTER_CROSSING", "0.1"))
TAU = complex(os.getenv("DYNBAXTER_TAU", "1.2j"))
LEVEL = int(os.getenv("DYNBAXTER_LEVEL", 4))
SERIES_TOL = float(os.getenv("DYNBAXTER_SERIES_TOL", 1e-17))
MAX_TERMS = int(os.getenv("DYNBAXTER_MAX_TERMS", 10000))

# Groupoid Configuration
SHIFT = float(os.getenv("DYNBAXTER_SHIFT", 0.39))
WINDOW = int(os.getenv("DYNBAXTER_WINDOW", 8))
RING_LENGTH = int(os.getenv("DYNBAXTER_RING_LENGTH", 4))

# SOS / Baxter intertwiner Configuration
SOS_SHIFT = float(os.getenv("DYNBAXTER_SOS_SHIFT", 9.5))
S_PLUS = float(os.getenv("DYNBAXTER_S_PLUS", 19.7))

# Logging Configuration
LOG_LEVEL = os.getenv("DYNBAXTER_LOG_LEVEL", "INFO")
