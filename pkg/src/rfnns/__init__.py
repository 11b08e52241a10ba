"""Robust fixed-network image steganography.

A secret image is embedded into texture-selected regions of a keyed,
deterministically generated cover as a bounded optimized perturbation; a
fixed random-weight convolutional decoder, reconstructible from the shared
key, recovers the secret even after lossy channel attacks.
"""

from .attacks import AttackSpec, AttackSuite, apply_exact, apply_surrogate
from .decoder import PROFILES, CapacityProfile, FixedDecoder, build_decoder
from .image_core import (ImageTensor, QualityReport, image_from_array,
                         load_image, mse, psnr, quality_report, save_image,
                         ssim)
from .keyed_rand import (DeterministicStream, KeyMaterial, derive_stream,
                         generate_cover, load_external_cover)
from .pipeline import (EmbedConfig, Manifest, embed, evaluate, extract,
                       load_manifest, save_manifest)
from .rspg import (BuiltInDetector, LossConfig, Schedule, ce_loss, objective,
                   optimize_perturbation)
from .texture import (BlockMask, ComplexityMap, block_entropy, lbp_code,
                      select_blocks)

__version__ = "0.1.0"
