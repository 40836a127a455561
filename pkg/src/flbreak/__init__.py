"""flbreak: deterministic federated-learning breaking-point simulator.

Core package layout:
  sim         discrete-event engine (clock, queue, named RNG streams)
  link        per-client impairment channel (delay, loss, queue, rate)
  tcp         simplified reliable transport with management tunables
  data        synthetic dataset + logistic-regression math
  fl          federated averaging rounds over the transport
  chaos       scheduled fault injection
  metrics     run records, threshold classifier, CSV emission
  config      experiment configuration schema
  experiments single / sweep / grid execution and remediation advice
  service     FastAPI wrapper; cli is a thin client of it
"""

__version__ = "0.1.0"

from .config import ConfigError, ExperimentConfig, load_config
from .fl import ExperimentSetup, run_training
from .link import LinkConfig
from .metrics import RunResult, ThresholdClass, classify
from .tcp import TcpParams

__all__ = [
    "__version__",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentSetup",
    "LinkConfig",
    "RunResult",
    "TcpParams",
    "ThresholdClass",
    "classify",
    "load_config",
    "run_training",
]
