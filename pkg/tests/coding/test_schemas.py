import pytest
import torch
from pydantic import ValidationError

from codedvae.coding.config import PROB_EPS
from codedvae.coding.schemas import BitWord, Codebook, CodeSpec, SoftWord


def test_code_spec_derived_sizes():
    code = CodeSpec(info_len=5, repeat=4)
    assert code.code_len == 20
    assert code.rate == pytest.approx(0.25)


def test_bit_word_rejects_non_bits():
    with pytest.raises(ValidationError):
        BitWord(bits=[0, 2, 1])


def test_bit_word_rejects_empty():
    with pytest.raises(ValidationError):
        BitWord(bits=[])


def test_soft_word_clamps():
    q = SoftWord(probs=[0.0, 0.5, 1.0])
    assert q.probs.tolist() == pytest.approx([PROB_EPS, 0.5, 1.0 - PROB_EPS])
    assert torch.isfinite(q.log_p1).all() and torch.isfinite(q.log_p0).all()


def test_soft_word_split_and_concat():
    q = SoftWord(probs=[0.1, 0.2, 0.3])
    first, second = q.split([1, 2])
    assert len(first) == 1 and len(second) == 2
    assert torch.equal(SoftWord.concat([first, second]).probs, q.probs)


def test_codebook_rejects_duplicates():
    with pytest.raises(ValidationError):
        Codebook(words=[[0, 1], [0, 1]], index_len=1)


def test_exhaustive_codebook_capacity():
    with pytest.raises(ValidationError):
        Codebook(words=[[0], [1]], index_len=13, exhaustive=True)
