# toy models beyond this many message bits are not enumerated
GAP_MAX_BITS = 4
GAP_MIN_SAMPLES = 10_000
# violations are counted beyond this many standard errors
GAP_SLACK_SIGMAS = 3.0
DEFAULT_TRIALS = 10_000
DEFAULT_LL_SAMPLES = 300
TRIAL_CHUNK = 1024
# items scored against all K * S latent draws at once
GAP_ITEM_CHUNK = 128
