"""Unpaired day/night translation for event-camera histograms.

A bridge-interpolated diffusion GAN translates multi-bin polarity
histograms between day and night domains, with bin-isolated encoding,
a frequency-split bottleneck, temporal-shuffling contrastive
regularization, and day/night-trained distribution metrics.
"""

from .bridge import BridgeConfig, interpolate, sample_chain, sinkhorn_plan
from .events import (
    Event,
    EventHistogram,
    EventStream,
    SceneConfig,
    bin_events,
    generate_day_scene,
    generate_night_scene,
    polarity_imbalance,
)
from .io import read_histogram, read_stream, write_histogram, write_stream
from .losses import ContrastiveConfig, LossWeights
from .metrics import event_fid, event_fvd, frechet_distance, kid, train_extractor
from .networks import Generator, GeneratorConfig, PatchCritic, ProjectionHeads
from .training import TrainConfig, train, translate
from .wavelet import WaveletSubbands, dwt2, idwt2

__version__ = "0.1.0"
