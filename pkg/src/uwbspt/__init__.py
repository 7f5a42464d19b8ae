"""Sleep postural transition recognition from single-antenna UWB radar frames.

The package turns raw range-by-slow-time frame matrices into two
complementary views (a slow-time difference image and an energy-weighted
range-time-frequency spectrogram), optionally expands training data with
four time-series augmentation ops, and classifies transitions with a
two-branch convolutional network written directly on numpy.
"""

__version__ = "0.1.0"
