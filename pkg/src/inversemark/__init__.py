"""Training-free robust image watermarking via latent-noise injection and
deterministic diffusion inversion."""

from .codec import AnalyticCodec, LatentCodec
from .core import (BitString, ImageTensor, LatentTensor, PipelineConfig,
                   ResidualTensor, TreeRingKey, WatermarkKey, load_image,
                   resize, save_image, watermark_bit_length)
from .denoiser import (LinearToyPredictor, NoisePredictor, ZeroToyPredictor,
                       conditioned_linear_predictor)
from .errors import (DegenerateInputError, InvalidArgumentError, InversemarkError,
                     IoError, NumericFailureError)
from .gshade import (DiffusedBits, gs_diffuse, gs_encrypt, gs_extract,
                     gs_extract_cell, gs_sample_noise, gs_vote, random_watermark_key)
from .metrics import bit_accuracy, detection_rate, multibit_detect, psnr, ssim
from .pipeline import (EmbedResult, ExtractResult, GaussianShadingInjector,
                       TreeRingInjector, embed, extract)
from .scheduler import (AlphaSchedule, SchedulerConfig, ddim_invert, ddim_sample,
                        make_schedule)
from .treering import (DetectionReport, tr_detect, tr_inject, tr_make_key,
                       tr_pvalue, tr_score)

__version__ = "0.1.0"
