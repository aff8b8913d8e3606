"""Stacked-GAN CT image enhancement and GrabCut lesion segmentation."""

__version__ = "0.1.0"
