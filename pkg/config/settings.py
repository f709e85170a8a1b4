"""
Configuration settings for the FDX testing toolkit.

Every tuneable value lives here or in .env so that nothing is scattered
across source files.
"""
import logging
import os
from dotenv import load_dotenv

load_dotenv()

# ---------------------------------------------------------------------------
# Runtime
# ---------------------------------------------------------------------------
THREADS   = int(os.getenv("FDX_THREADS", str(os.cpu_count() or 1)))
LOG_LEVEL = os.getenv("FDX_LOG_LEVEL", "WARNING")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# ---------------------------------------------------------------------------
# Poisson-binomial kernel
# ---------------------------------------------------------------------------
# Above this many success probabilities the pmf is built by pairwise
# (divide-and-conquer) convolution instead of one Bernoulli at a time.
PBD_DC_CUTOFF = int(os.getenv("FDX_PBD_DC_CUTOFF", "5000"))
PBD_SUM_TOL   = 1e-12
BISECT_TOL    = 1e-10

# ---------------------------------------------------------------------------
# lfdr estimation
# ---------------------------------------------------------------------------
EM_RESTARTS   = int(os.getenv("FDX_EM_RESTARTS", "5"))
EM_MAX_ITER   = int(os.getenv("FDX_EM_MAX_ITER", "500"))
EM_TOL        = float(os.getenv("FDX_EM_TOL", "1e-8"))
EM_CANDIDATES = tuple(
    int(g) for g in os.getenv("FDX_EM_CANDIDATES", "2,3,4").split(",") if g.strip()
)
EM_MIN_SD     = 1e-3      # a component narrower than this counts as collapsed
EM_REG_COVAR  = 1e-8      # variance floor handed to GaussianMixture
EM_MIN_POINTS = 50
# > 0 merges fitted components closer than this many sds; 0 keeps them all
MIXTURE_MERGE_SEP = float(os.getenv("FDX_MIXTURE_MERGE_SEP", "0"))

CENTRAL_FRACTION  = float(os.getenv("FDX_CENTRAL_FRACTION", "0.5"))
EMPNULL_MIN_POINTS = 200
EMPNULL_MIN_WINDOW = 100
KDE_GRID          = int(os.getenv("FDX_KDE_GRID", "1024"))

# ---------------------------------------------------------------------------
# Dependence oracles
# ---------------------------------------------------------------------------
GH_NODES     = int(os.getenv("FDX_GH_NODES", "64"))
GH_MAX_NODES = int(os.getenv("FDX_GH_MAX_NODES", "1024"))
GH_TOL       = float(os.getenv("FDX_GH_TOL", "1e-8"))
ENUM_MAX_M   = int(os.getenv("FDX_ENUM_MAX_M", "16"))

# ---------------------------------------------------------------------------
# Simulation harness
# ---------------------------------------------------------------------------
DEFAULT_REPS          = int(os.getenv("FDX_DEFAULT_REPS", "2000"))
COUNTEREXAMPLE_RUNS   = int(os.getenv("FDX_COUNTEREXAMPLE_RUNS", "1000"))
HIERARCHICAL_M        = int(os.getenv("FDX_HIERARCHICAL_M", "5000"))
MAX_EXCLUSION_RATE    = float(os.getenv("FDX_MAX_EXCLUSION_RATE", "0.01"))

# ---------------------------------------------------------------------------
# Benchmark preset (Procedure 1 full scan vs Procedure 2 shortcuts)
# ---------------------------------------------------------------------------
BENCH_M     = int(os.getenv("FDX_BENCH_M", "10000"))
BENCH_PI    = 0.1
BENCH_MU    = -2.0
BENCH_GAMMA = 0.1
BENCH_ALPHA = 0.05


def configure_logging(level: str | None = None) -> None:
    """Set up root logging once; only the CLI calls this."""
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.WARNING),
        format=LOG_FORMAT,
    )
