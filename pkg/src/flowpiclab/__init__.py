"""Traffic-classification experimentation toolkit.

Packet time series are turned into flowpic images (2D time x packet-size
histograms), augmented, and fed to supervised / contrastive / few-shot
CNN classifiers or a boosted-tree baseline.  A statistics layer ranks
augmentations across experiment campaigns.
"""

__version__ = "0.1.0"
