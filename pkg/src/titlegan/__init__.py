"""Adversarially trained multi-modal short-title generation.

A long product title, its attribute tags and an image feature vector are
encoded jointly; an attention LSTM decoder emits a short title. The decoder
is pretrained with maximum likelihood and then tuned with REINFORCE against
an LSTM discriminator, using Monte Carlo rollouts for per-step rewards.
Everything runs on a small float64 tape-autodiff engine; the tape-free
sampling path is numba-accelerated (see titlegan.kernels).
"""

__version__ = "0.1.0"
