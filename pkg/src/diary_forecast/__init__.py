"""Same-day and next-day PHQ-2 prediction from daily diary and ESM self-reports."""

__version__ = "0.1.0"

from .dataset import Cohort, FeatureSet, SubjectSeries, load_cohort, save_cohort  # noqa: E402
from .errors import DataError, DiaryForecastError, NumericError, UsageError  # noqa: E402
from .eval import HyperGrid, Task, lag_sweep, loso_evaluate, mae, nested_grid_search  # noqa: E402
from .features import build_lagged, build_sameday  # noqa: E402
from .synth import SynthConfig, generate_cohort  # noqa: E402

__all__ = [
    "__version__", "Cohort", "FeatureSet", "SubjectSeries", "load_cohort", "save_cohort",
    "DiaryForecastError", "UsageError", "DataError", "NumericError",
    "HyperGrid", "Task", "loso_evaluate", "nested_grid_search", "lag_sweep", "mae",
    "build_sameday", "build_lagged", "SynthConfig", "generate_cohort",
]
