ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_LEARNING_RATE = 1e-4
DEFAULT_BATCH_SIZE = 128
RUNLOG_COLUMNS = ("epoch", "elbo", "recon", "kl", "kl2", "grad_norm", "seconds")
