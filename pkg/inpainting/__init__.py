"""
Deep long audio inpainting.

Fills masked gaps of 100+ ms in mono audio with convolutional networks working
either on the raw waveform or on log-magnitude spectrograms (phase recovered
with Griffin-Lim), plus the synthetic benchmark, perceptual losses and the
mask-length x receptive-field ablation used to evaluate them.
"""

__version__ = "0.1.0"
