"""Masked-LM scoring service and continued-pretraining runner.

The HTTP API exposes full-vocabulary mask-fill probabilities and tokenizer
introspection for checkpoints on local disk; the train command consumes the
audit toolkit's counterfactual pair files and monitors bias per epoch with
the same audit code path.
"""

__version__ = "0.1.0"

from .app import create_app
from .bridge import InProcessScorer
from .models import LoadedModel, ModelRegistry
from .train import TrainConfig, train
