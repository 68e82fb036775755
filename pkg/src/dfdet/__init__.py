"""Desk-scale diffusion-forensics deepfake detection.

Train a toy diffusion model, measure reconstruction error under
deterministic inversion, and distill the slow reconstruction-based
detector into a single-denoiser-call student.
"""

__version__ = "0.1.0"
