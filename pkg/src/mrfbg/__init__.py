"""Background initialisation by MRF labelling of block representatives,
plus a block-based Gaussian/cosine/temporal foreground cascade."""

from .imagio import Frame, FrameSequence, read_image, read_sequence, write_image
from .mrf import MrfParams, estimate_background, icm
from .repset import CollectorParams, collect
from .segmod import BackgroundModel, SegConfig, apply_mrf_means, load_model, save_model, segment, train_model
from .similarity import SimilarityParams, similar

__version__ = "0.1.0"

__all__ = [
    "Frame", "FrameSequence", "read_image", "read_sequence", "write_image",
    "MrfParams", "estimate_background", "icm",
    "CollectorParams", "collect",
    "BackgroundModel", "SegConfig", "apply_mrf_means", "load_model", "save_model", "segment", "train_model",
    "SimilarityParams", "similar",
]
