import torch


class AdamState:
    """
    Moment estimates of the Adam optimizer, keyed by parameter name.

    Attributes:
        m: First moment estimates.
        v: Second moment estimates.
        t: Accepted steps so far.
        rejected: Steps refused because of non-finite gradients.
    """

    def __init__(self) -> None:
        self.m: dict[str, torch.Tensor] = {}
        self.v: dict[str, torch.Tensor] = {}
        self.t = 0
        self.rejected = 0
