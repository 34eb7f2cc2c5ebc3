"""
Multi-view relation extraction in an intact space
"""

from .config import RunConfig, ModelConfig, TrainConfig, load_config
from .data import load_corpus, build_vocab, encode_dataset, load_dataset, save_dataset
from .synth import SynthConfig, synth_generate
from .model import IntactModel, build_model, load_checkpoint, save_checkpoint
from .train import train, train_runs
from .evaluation import evaluate, pr_curve, auc, max_f1, summarize_runs
from .ablation import run_ablation
