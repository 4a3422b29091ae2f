DEFAULT_BETA = 15.0
RHO_DELTA = 1e-12
