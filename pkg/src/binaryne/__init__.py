"""Binary network embedding for attributed graphs with Hamming-distance node search."""
from .codes import CodeMatrix, binarize, load_codes, save_codes
from .evaluation import EvalConfig, EvalReport, feature_codes, run_benchmark
from .graph import AttributeMatrix, Graph, LabelMap, load_attributes, load_edge_list, load_labels
from .model import ModelParams, TrainConfig, init_params, train
from .search import RankedResult, hamming, top_k, top_k_euclidean
from .walks import PairCounts, WalkConfig, collect_pairs, count_context_pairs, generate_walks

__version__ = "0.1.0"
