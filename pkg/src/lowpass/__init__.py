"""Low-pass activations, DCT augmentation and corruption robustness analysis."""
