"""iFx: interpretable feature extraction for time series extrinsic regression.

Series are expanded into several representations, stored as secondary
tables, turned into random aggregate features, filtered with a MODL-style
2D discretisation criterion and fed to an end regressor.
"""

from .dataset import TimeSeriesDataset, load_dataset, parse_csv_pair, parse_ts_file, validate
from .errors import DataError, DomainError, IfxError, ModelError, SchemaError
from .lang import FeatureExpr, FlattenedTable, flatten, sample_features, schema_from_store
from .modl import cost, level, null_cost, optimize, select_features
from .pipeline import RunConfig, benchmark, permutation_test, run
from .regress import fit_baseline, fit_forest, fit_tree, predict, rmse
from .store import build_store
from .transforms import ReprKind

__version__ = "0.1.0"
