"""Hop-sequence node classification: precompute walk-count neighborhood
sequences once, then train convolution or attention heads on them."""
from .graph import (FeatureMatrix, Graph, LabelSet, NodeSplit, add_self_loops,
                    load_edge_list, load_features, load_labels, load_split)
from .models import Model, ModelConfig, parameter_count
from .precompute import (SequenceTensor, load_sequence, neighbor2seq, neighbor2seq_chunked,
                         save_sequence, spmm, walk_count_oracle)
from .train import TrainConfig, evaluate, fit, train

__version__ = "0.1.0"
