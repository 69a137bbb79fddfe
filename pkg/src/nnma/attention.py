"""Multi-level attention stack with an external memory vector.

Reading an argument pair proceeds in passes. Pass 0 treats every word
equally: each argument's representation is the column mean of its
encoder output. Each later pass k first condenses what has been read so
far into a memory vector M_k, then scores every word of each argument
against that memory, turns the scores into a probability distribution,
and re-reads the argument as the attention-weighted mixture of its word
encodings. The memory update is recurrent, so pass k sees everything
passes 1..k-1 extracted.

All weight shapes are in terms of d (encoder hidden size per direction,
so word encodings have 2d rows) and d_m (memory size).
"""

from __future__ import annotations

from dataclasses import dataclass

from .rng import Rng
from .recurrent import xavier_uniform
from .tensor import (
    Tensor,
    broadcast_repeat,
    concat,
    mean_cols,
    softmax,
    tanh,
    transpose,
)


@dataclass
class GeneralRepr:
    """Mean-pooled argument representations, each 2d x 1."""

    R0_1: Tensor
    R0_2: Tensor


@dataclass
class ArgAttentionParams:
    """Attention weights for one argument at one level."""

    w_a: Tensor  # 2d x 2d, transforms word encodings
    w_b: Tensor  # 2d x d_m, injects the memory
    w_s: Tensor  # 1 x 2d, scores each position

    @classmethod
    def create(cls, d: int, d_m: int, rng: Rng) -> "ArgAttentionParams":
        return cls(
            xavier_uniform(2 * d, 2 * d, rng),
            xavier_uniform(2 * d, d_m, rng),
            xavier_uniform(1, 2 * d, rng),
        )

    def tensors(self) -> list[Tensor]:
        return [self.w_a, self.w_b, self.w_s]


def memory_input_width(level: int, d: int, d_m: int) -> int:
    """Width of the concatenated memory-update input: [R1, R2, R1-R2]
    gives 6d at level 1; later levels append the previous memory."""
    if level < 1:
        raise ValueError(f"level index starts at 1, got {level}")
    return 6 * d if level == 1 else 6 * d + d_m


@dataclass
class AttentionLevelParams:
    """All weights of one attention level: the memory update plus one
    attention triple per argument."""

    w_m: Tensor
    arg1: ArgAttentionParams
    arg2: ArgAttentionParams

    @classmethod
    def create(cls, level: int, d: int, d_m: int, rng: Rng) -> "AttentionLevelParams":
        w_m = xavier_uniform(d_m, memory_input_width(level, d, d_m), rng)
        return cls(w_m, ArgAttentionParams.create(d, d_m, rng),
                   ArgAttentionParams.create(d, d_m, rng))

    def tensors(self) -> list[Tensor]:
        return [self.w_m] + self.arg1.tensors() + self.arg2.tensors()


@dataclass
class LevelOutput:
    """Everything one pass produced: memory, both attention
    distributions (columns, length L_1 and L_2), both re-read
    representations (2d x 1)."""

    M: Tensor
    a1: Tensor
    a2: Tensor
    R1: Tensor
    R2: Tensor


@dataclass
class AttentionTrace:
    """Full record of a forward pass through the stack."""

    general: GeneralRepr
    levels: list[LevelOutput]

    @property
    def final_r1(self) -> Tensor:
        return self.levels[-1].R1

    @property
    def final_r2(self) -> Tensor:
        return self.levels[-1].R2


def general_repr(h1: Tensor, h2: Tensor) -> GeneralRepr:
    """Pass-0 representations: column means of the encoder outputs."""
    return GeneralRepr(mean_cols(h1), mean_cols(h2))


def memory_first(g: GeneralRepr, p: AttentionLevelParams) -> Tensor:
    """M_1 = tanh(W_m [R0_1; R0_2; R0_1 - R0_2]); no bias term."""
    stacked = concat([g.R0_1, g.R0_2, g.R0_1 - g.R0_2])
    return tanh(p.w_m @ stacked)


def memory_next(r1_prev: Tensor, r2_prev: Tensor, m_prev: Tensor,
                p: AttentionLevelParams) -> Tensor:
    """M_k = tanh(W_m [R1; R2; R1 - R2; M_prev]) for levels k >= 2."""
    stacked = concat([r1_prev, r2_prev, r1_prev - r2_prev, m_prev])
    return tanh(p.w_m @ stacked)


def attend(h: Tensor, M: Tensor, p: ArgAttentionParams) -> tuple[Tensor, Tensor]:
    """Memory-conditioned attention over one argument.

    o = tanh(W_a h + W_b (M repeated across L columns)); position scores
    are the row W_s o, and a = softmax of that row as a column vector.
    Returns (a, R) with R = h a, the re-read representation. With
    W_s = 0 the distribution is exactly uniform and R reproduces the
    column mean of h bitwise (see mean_cols).
    """
    length = h.cols
    o = tanh(p.w_a @ h + p.w_b @ broadcast_repeat(M, length))
    scores = p.w_s @ o
    a = softmax(transpose(scores))
    return a, h @ a


def run_stack(h1: Tensor, h2: Tensor,
              params: list[AttentionLevelParams]) -> AttentionTrace:
    """All K attention passes over an encoded argument pair.

    Level 1 builds its memory from the pass-0 means; each later level
    builds it from the previous level's representations and memory.
    """
    if len(params) == 0:
        raise ValueError("attention stack needs at least one level")
    g = general_repr(h1, h2)
    levels: list[LevelOutput] = []
    for k, p in enumerate(params, start=1):
        if k == 1:
            M = memory_first(g, p)
        else:
            prev = levels[-1]
            M = memory_next(prev.R1, prev.R2, prev.M, p)
        a1, r1 = attend(h1, M, p.arg1)
        a2, r2 = attend(h2, M, p.arg2)
        levels.append(LevelOutput(M, a1, a2, r1, r2))
    return AttentionTrace(g, levels)
