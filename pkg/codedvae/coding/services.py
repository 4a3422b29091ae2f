import logging

import numpy as np
import torch

from codedvae.coding.config import INDEX_DRAW_MAX_BITS, MAX_CODEBOOK_BITS
from codedvae.coding.exceptions import (
    CodebookCapacityError,
    DistinctnessError,
    EmptyCodebookError,
    LengthMismatchError,
)
from codedvae.coding.schemas import BitWord, Codebook, CodeSpec, SoftWord

logger = logging.getLogger(__name__)


def _check_length(actual: int, expected: int, what: str) -> None:
    if actual != expected:
        logger.error(f"{what}: expected length {expected}, got {actual}", exc_info=False)
        raise LengthMismatchError(f"{what}: expected length {expected}, got {actual}")


def hard_encode(code: CodeSpec, m: BitWord) -> BitWord:
    """
    Encode a message with the repetition code, c = m^T G.

    Args:
        code: The repetition code.
        m: Message bits, length M.
    Returns:
        The codeword, length D, where positions L(k-1)+1 .. Lk repeat m_k.
    """
    _check_length(len(m), code.info_len, "hard_encode")
    return BitWord(bits=m.bits.repeat_interleave(code.repeat, dim=-1))


def soft_encode(code: CodeSpec, q_m: SoftWord) -> SoftWord:
    """
    Propagate information-bit probabilities onto every coded position.

    Args:
        code: The repetition code.
        q_m: Information-bit probabilities, length M.
    Returns:
        Coded-bit probabilities, length D.
    """
    _check_length(len(q_m), code.info_len, "soft_encode")
    return SoftWord(probs=q_m.probs.repeat_interleave(code.repeat, dim=-1))


def soft_decode(code: CodeSpec, q_c: SoftWord) -> SoftWord:
    """
    Soft majority vote over the copies of each information bit.

    q(m_k=1) is the all-ones product of the copies' probabilities normalized
    against the all-zeros product, evaluated in the log domain. The identity
    code (L = 1) returns its input untouched.

    Args:
        code: The repetition code.
        q_c: Coded-bit probabilities, length D.
    Returns:
        Information-bit probabilities, length M.
    """
    _check_length(len(q_c), code.code_len, "soft_decode")
    if code.repeat == 1:
        return q_c
    grouped = (*q_c.probs.shape[:-1], code.info_len, code.repeat)
    log_ones = q_c.log_p1.reshape(grouped).sum(dim=-1)
    log_zeros = q_c.log_p0.reshape(grouped).sum(dim=-1)
    log_q = log_ones - torch.logaddexp(log_ones, log_zeros)
    return SoftWord(probs=torch.exp(log_q))


def map_bits(q: SoftWord) -> BitWord:
    # ties at exactly 0.5 decode to 0
    return BitWord(bits=(q.probs > 0.5).to(torch.long))


def hamming_distances(book: Codebook, c_hard: BitWord) -> torch.Tensor:
    _check_length(len(c_hard), book.code_len, "min_distance_decode")
    return (c_hard.bits.unsqueeze(-2) != book.words).sum(dim=-1)


def min_distance_decode(book: Codebook, c_hard: BitWord) -> tuple[int, BitWord]:
    """
    Nearest valid codeword in Hamming distance.

    Args:
        book: Codebook to search.
        c_hard: A single received word of length D.
    Returns:
        Index and codeword at minimum distance, lowest index on ties.
    """
    if len(book) == 0:
        raise EmptyCodebookError("Cannot decode against an empty codebook")
    distances = hamming_distances(book, c_hard).numpy()
    # np.argmin returns the first occurrence
    index = int(np.argmin(distances))
    return index, book.word(index)


def xor_combine(m1: BitWord, m2: BitWord) -> BitWord:
    _check_length(len(m2), len(m1), "xor_combine")
    return BitWord(bits=torch.bitwise_xor(m1.bits, m2.bits))


def _xor_convolve(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    # P(a xor b = 1) for independent bits
    return a * (1.0 - b) + (1.0 - a) * b


def posterior_xor_residual(q_m12: SoftWord, q_m1: SoftWord) -> SoftWord:
    """
    Posterior of m2 from the decoded combination m1 xor m2 and m1.

    Args:
        q_m12: Probabilities of the combined bits.
        q_m1: Probabilities of the first-branch bits.
    Returns:
        p_j = q(m12=1) q(m1=0) + q(m12=0) q(m1=1).
    """
    _check_length(len(q_m1), len(q_m12), "posterior_xor_residual")
    return SoftWord(probs=_xor_convolve(q_m12.probs, q_m1.probs))


def posterior_xor_recombine(q_m1: SoftWord, q_m2: SoftWord) -> SoftWord:
    """
    Posterior of the combination m1 xor m2 from the two branch posteriors.

    Args:
        q_m1: Probabilities of the first-branch bits.
        q_m2: Probabilities of the second-branch bits.
    Returns:
        q_j = q(m1=1) q(m2=0) + q(m1=0) q(m2=1).
    """
    _check_length(len(q_m2), len(q_m1), "posterior_xor_recombine")
    return SoftWord(probs=_xor_convolve(q_m1.probs, q_m2.probs))


def index_to_messages(info_len: int) -> torch.Tensor:
    """
    All 2^M messages in index order, most significant bit first.

    Args:
        info_len: Number of information bits M.
    Returns:
        (2^M, M) tensor of bits.
    """
    if info_len > MAX_CODEBOOK_BITS:
        raise CodebookCapacityError(
            f"Enumeration supports at most {MAX_CODEBOOK_BITS} bits, got {info_len}"
        )
    indices = torch.arange(2**info_len).unsqueeze(-1)
    shifts = torch.arange(info_len - 1, -1, -1)
    return (indices >> shifts) & 1


def message_index(m: BitWord) -> torch.Tensor:
    weights = 2 ** torch.arange(len(m) - 1, -1, -1)
    return (m.bits * weights).sum(dim=-1)


def enumerate_codebook(code: CodeSpec) -> Codebook:
    """
    Exhaustive codebook of a repetition code in message index order.

    Args:
        code: The repetition code, M <= 12.
    Returns:
        The 2^M codewords.
    """
    messages = index_to_messages(code.info_len)
    words = hard_encode(code, BitWord(bits=messages)).bits
    logger.debug(f"Enumerated {words.shape[0]} codewords of length {code.code_len}")
    return Codebook(words=words, index_len=code.info_len, exhaustive=True)


def random_codebook(info_len: int, code_len: int, seed: int) -> Codebook:
    """
    Random block code: 2^M distinct uniformly drawn D-bit words.

    Args:
        info_len: Number of information bits M, at most 12.
        code_len: Word length D, at least M.
        seed: Seed of the draw.
    Returns:
        The codebook; identical for identical seeds.
    """
    if info_len > MAX_CODEBOOK_BITS:
        raise CodebookCapacityError(
            f"Random codebooks support at most {MAX_CODEBOOK_BITS} bits, got {info_len}"
        )
    if info_len > code_len:
        raise DistinctnessError(
            f"Cannot draw {2**info_len} distinct words of length {code_len}"
        )
    rng = np.random.default_rng(seed)
    size = 2**info_len
    if code_len <= INDEX_DRAW_MAX_BITS:
        # distinct word indices, unpacked MSB first
        indices = rng.choice(2**code_len, size=size, replace=False).astype(np.int64)
        shifts = np.arange(code_len - 1, -1, -1, dtype=np.int64)
        words = (indices[:, None] >> shifts) & 1
    else:
        seen: set[bytes] = set()
        rows: list[np.ndarray] = []
        collisions = 0
        while len(rows) < size:
            word = rng.integers(0, 2, size=code_len, dtype=np.int64)
            key = word.tobytes()
            if key in seen:
                collisions += 1
                continue
            seen.add(key)
            rows.append(word)
        if collisions:
            logger.warning(f"Redrew {collisions} colliding codewords")
        words = np.stack(rows)
    logger.debug(f"Drew random codebook ({info_len}, {code_len}) with seed {seed}")
    return Codebook(words=torch.from_numpy(words), index_len=info_len)
