"""Token-conditioned latent-diffusion speech codec.

Discrete RVQ tokens from a strided conv codec condition a diffusion sampler
(DDPM, DDIM, or midway-infilling) that reconstructs continuous latents, which
a separately trained wide autoencoder decodes back to waveforms.
"""

from .schedule import NoiseSchedule, linear_schedule

__all__ = ["NoiseSchedule", "linear_schedule"]
__version__ = "0.1.0"
