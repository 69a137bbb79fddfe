"""LSTM cell and bidirectional sequence encoder.

One step consumes the concatenation [x; h_prev] through four gate
projections; a direction run threads (h, c) along the sequence from
zero initial states; the bidirectional encoder stacks the forward and
(re-aligned) backward runs into a 2d x L matrix, one column per word.

Each argument of a pair gets its own BiLstmParams; nothing here is
shared between the two encoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

from .rng import Rng
from .tensor import Tensor, concat, hstack, select_columns, sigmoid, tanh


def xavier_uniform(rows: int, cols: int, rng: Rng) -> Tensor:
    """Weight matrix drawn uniform(-r, r), r = sqrt(6 / (fan_in + fan_out))
    with fan_in = cols and fan_out = rows."""
    r = math.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform_matrix(rows, cols, -r, r), requires_grad=True)


@dataclass
class LstmParams:
    """Gate projections for one direction.

    Each W_* maps the concatenated [input; previous hidden] vector of
    length input_dim + hidden_dim to the hidden dimension.
    """

    W_i: Tensor
    W_f: Tensor
    W_o: Tensor
    W_c: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_c: Tensor

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: Rng) -> "LstmParams":
        """Xavier-uniform weights drawn in field order; zero biases."""
        width = input_dim + hidden_dim
        weights = [xavier_uniform(hidden_dim, width, rng) for _ in range(4)]
        biases = [Tensor.zeros(hidden_dim, 1, requires_grad=True) for _ in range(4)]
        return cls(*weights, *biases)

    @property
    def hidden_dim(self) -> int:
        return self.W_i.rows

    def tensors(self) -> list[Tensor]:
        """Parameters in serialization order."""
        return [self.W_i, self.W_f, self.W_o, self.W_c,
                self.b_i, self.b_f, self.b_o, self.b_c]


@dataclass
class BiLstmParams:
    forward: LstmParams
    backward: LstmParams

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: Rng) -> "BiLstmParams":
        fwd = LstmParams.create(input_dim, hidden_dim, rng)
        bwd = LstmParams.create(input_dim, hidden_dim, rng)
        return cls(fwd, bwd)

    @property
    def hidden_dim(self) -> int:
        return self.forward.hidden_dim

    def tensors(self) -> list[Tensor]:
        return self.forward.tensors() + self.backward.tensors()


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams) -> tuple[Tensor, Tensor]:
    """One cell update; returns (h, c).

    The gate input is the stacked vector [x; h_prev], in that order.
    """
    z = concat([x, h_prev])
    i = sigmoid(p.W_i @ z + p.b_i)
    f = sigmoid(p.W_f @ z + p.b_f)
    o = sigmoid(p.W_o @ z + p.b_o)
    c_hat = tanh(p.W_c @ z + p.b_c)
    c = i * c_hat + f * c_prev
    h = o * tanh(c)
    return h, c


def run_direction(seq: Tensor, p: LstmParams, reverse: bool = False) -> Tensor:
    """Hidden states over a (input_dim x L) sequence, one column per word.

    Initial h and c are zero. With ``reverse`` the words are consumed
    last-to-first, but output column i still corresponds to word i of
    the original order.
    """
    length = seq.cols
    if length == 0:
        raise ValueError("run_direction needs at least one word")
    d = p.hidden_dim
    h = Tensor.zeros(d, 1)
    c = Tensor.zeros(d, 1)
    order = range(length - 1, -1, -1) if reverse else range(length)
    states: dict[int, Tensor] = {}
    for t in order:
        x = select_columns(seq, [t])
        h, c = lstm_step(x, h, c, p)
        states[t] = h
    return hstack([states[t] for t in range(length)])


def bi_encode(seq: Tensor, p: BiLstmParams) -> Tensor:
    """Bidirectional encoding: column i = [forward_i; backward_i], shape 2d x L."""
    fwd = run_direction(seq, p.forward, reverse=False)
    bwd = run_direction(seq, p.backward, reverse=True)
    return concat([fwd, bwd])
