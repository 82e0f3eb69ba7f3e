"""Bi-LSTM-CRF named-entity tagger built on a small numpy autodiff core."""

from .config import Config
from .crf import CrfParams, log_partition, nll_loss, score_sequence, viterbi_decode
from .data import Corpus, Token, batch_iter, parse_conll, serialize_conll, synth_corpus, validate_bio
from .evaluation import extract_chunks, f1_report
from .model import NerModel
from .optim import NadamState, lr_schedule, nadam_step
from .tensor import Tape, Tensor

__version__ = "0.1.0"
