from .acoustic import (
    AcousticModel,
    FrameAligner,
    FrameDecoder,
    LatentPosterior,
    LossBreakdown,
    PosteriorEncoder,
    TextEncoder,
    reparameterize,
    stage1_loss,
    upsample,
)
from .prior import (
    GaussianARPrior,
    PriorParams,
    ReferenceEncoder,
    decode_duration,
    encode_duration,
    gaussian_kl,
    stage2_kl,
)
from .system import TTSSystem, build_system

__all__ = [
    "AcousticModel",
    "FrameAligner",
    "FrameDecoder",
    "LatentPosterior",
    "LossBreakdown",
    "PosteriorEncoder",
    "TextEncoder",
    "reparameterize",
    "stage1_loss",
    "upsample",
    "GaussianARPrior",
    "PriorParams",
    "ReferenceEncoder",
    "decode_duration",
    "encode_duration",
    "gaussian_kl",
    "stage2_kl",
    "TTSSystem",
    "build_system",
]
