import torch

DTYPE = torch.float64
LEAKY_SLOPE = 0.01
CHECKPOINT_FORMAT = "codedvae-checkpoint"
CHECKPOINT_VERSION = 1
