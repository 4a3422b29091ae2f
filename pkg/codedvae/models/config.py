DEFAULT_NU = 0.5
DEFAULT_HIDDEN = 256
