PROB_EPS = 1e-7
MAX_CODEBOOK_BITS = 12
# random codebooks up to this word length draw distinct word indices directly
INDEX_DRAW_MAX_BITS = 62
