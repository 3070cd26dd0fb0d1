"""Patient-similarity ICU mortality prediction.

Standardizes irregular 48-hour clinical time series into fixed time-frame
grids, classifies patients with a weighted nearest-neighbor model, and
learns per-variable distance weights with a gradient-descent wrapper.
"""

__version__ = "0.1.0"

from .errors import PatsimError
from .knn import FeatureWeights, Model

__all__ = ["FeatureWeights", "Model", "PatsimError", "__version__"]
