# codewords drawn per item for each training step
DEFAULT_SAMPLES = 16
