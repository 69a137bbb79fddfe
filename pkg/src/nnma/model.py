"""The full classifier: embeddings, two encoders, attention stack,
softmax layer; plus a self-describing binary checkpoint format.

A forward pass embeds both arguments, encodes each with its own
bidirectional LSTM, runs the K-level attention stack, and classifies
the concatenated top-level features [R1; R2; R1 - R2] through a linear
layer and softmax. During training an inverted-dropout mask is applied
to that feature vector right before the linear layer.

Checkpoint layout (little-endian throughout):

    bytes 0..3   magic "NNMA"
    bytes 4..7   format version, u32
    bytes 8..15  header length in bytes, u64
    header       JSON (UTF-8, sorted keys): d, d_e, d_m, k, n, v,
                 labels (n strings), vocab (v tokens, index order)
    payload      every parameter as raw float64 row-major bytes, in
                 the order of ``parameters()``

The header fixes every array shape, so the payload carries no framing;
any length mismatch is a hard error and no partial model is returned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .attention import AttentionLevelParams, ArgAttentionParams, AttentionTrace, run_stack
from .corpus import Instance
from .embeddings import EmbeddingMatrix, Vocabulary, embed_sequence
from .recurrent import BiLstmParams, LstmParams, bi_encode, xavier_uniform
from .rng import Rng
from .tensor import Tensor, concat, nll_from_logits, scale, softmax

MAGIC = b"NNMA"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint data."""


@dataclass
class Prediction:
    """Classifier output for one instance: the class distribution, the
    argmax label index (lowest index wins ties), the full attention
    trace, and the raw logits the loss is computed from."""

    probabilities: Tensor
    predicted_label: int
    trace: AttentionTrace
    logits: Tensor


class NnmaModel:
    """All learnable parameters plus the forward computation."""

    def __init__(self, vocab: Vocabulary, label_names: list[str],
                 embeddings: EmbeddingMatrix, enc1: BiLstmParams,
                 enc2: BiLstmParams, levels: list[AttentionLevelParams],
                 w_p: Tensor, b_p: Tensor):
        if len(label_names) < 2:
            raise ValueError("need at least two labels")
        if not levels:
            raise ValueError("need at least one attention level")
        self.vocab = vocab
        self.label_names = list(label_names)
        self.embeddings = embeddings
        self.enc1 = enc1
        self.enc2 = enc2
        self.levels = levels
        self.w_p = w_p
        self.b_p = b_p

    # -- construction -----------------------------------------------------

    @classmethod
    def create(cls, vocab: Vocabulary, label_names: list[str], d_e: int,
               d: int, d_m: int, k: int, rng: Rng,
               embeddings: EmbeddingMatrix | None = None) -> "NnmaModel":
        """Fresh model; weight matrices are drawn from the generator in
        the fixed parameter order, biases start at zero."""
        if embeddings is None:
            embeddings = EmbeddingMatrix.random(vocab, d_e, rng)
        enc1 = BiLstmParams.create(d_e, d, rng)
        enc2 = BiLstmParams.create(d_e, d, rng)
        levels = [AttentionLevelParams.create(level, d, d_m, rng)
                  for level in range(1, k + 1)]
        w_p = xavier_uniform(len(label_names), 6 * d, rng)
        b_p = Tensor.zeros(len(label_names), 1, requires_grad=True)
        return cls(vocab, label_names, embeddings, enc1, enc2, levels, w_p, b_p)

    # -- dimensions --------------------------------------------------------

    @property
    def d_e(self) -> int:
        return self.embeddings.dim

    @property
    def d(self) -> int:
        return self.enc1.hidden_dim

    @property
    def d_m(self) -> int:
        return self.levels[0].w_m.rows

    @property
    def k(self) -> int:
        return len(self.levels)

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    def label_index(self, name: str) -> int:
        try:
            return self.label_names.index(name)
        except ValueError:
            raise ValueError(f"unknown label {name!r}; model has {self.label_names}") from None

    # -- parameter groups ---------------------------------------------------

    def parameters(self) -> list[Tensor]:
        """Every trainable tensor, in the serialization order."""
        return self.embedding_parameters() + self.network_parameters()

    def embedding_parameters(self) -> list[Tensor]:
        """The group trained at the embedding-specific rate."""
        return [self.embeddings.weights]

    def network_parameters(self) -> list[Tensor]:
        """Everything except the embedding matrix."""
        out = self.enc1.tensors() + self.enc2.tensors()
        for level in self.levels:
            out += level.tensors()
        out += [self.w_p, self.b_p]
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- forward / loss -----------------------------------------------------

    def forward(self, instance: Instance, dropout_mask: Tensor | None = None) -> Prediction:
        x1 = embed_sequence(instance.arg1, self.vocab, self.embeddings)
        x2 = embed_sequence(instance.arg2, self.vocab, self.embeddings)
        h1 = bi_encode(x1, self.enc1)
        h2 = bi_encode(x2, self.enc2)
        trace = run_stack(h1, h2, self.levels)
        feature = concat([trace.final_r1, trace.final_r2,
                          trace.final_r1 - trace.final_r2])
        if dropout_mask is not None:
            feature = feature * dropout_mask
        logits = self.w_p @ feature + self.b_p
        probabilities = softmax(logits)
        predicted = int(np.argmax(probabilities.data))
        return Prediction(probabilities, predicted, trace, logits)

    def loss(self, prediction: Prediction, gold: int, weight: float = 1.0) -> Tensor:
        """weight * (-log P[gold]), computed from the logits via
        log-sum-exp so extreme confidence stays finite."""
        if weight < 0:
            raise ValueError(f"weight must be nonnegative, got {weight}")
        return scale(nll_from_logits(prediction.logits, gold), weight)

    # -- checkpoint ----------------------------------------------------------

    def save(self, sink) -> None:
        """Write the checkpoint to a path or binary stream."""
        if hasattr(sink, "write"):
            self._write(sink)
        else:
            with open(Path(sink), "wb") as fh:
                self._write(fh)

    def _write(self, fh: IO[bytes]) -> None:
        header = {
            "d": self.d,
            "d_e": self.d_e,
            "d_m": self.d_m,
            "k": self.k,
            "labels": self.label_names,
            "n": self.n_labels,
            "v": len(self.vocab),
            "vocab": self.vocab.tokens,
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        fh.write(MAGIC)
        fh.write(np.uint32(FORMAT_VERSION).tobytes())
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for p in self.parameters():
            fh.write(p.data.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, source) -> "NnmaModel":
        """Read a checkpoint from a path or binary stream; every
        parameter is reproduced bitwise."""
        if hasattr(source, "read"):
            return cls._read(source)
        with open(Path(source), "rb") as fh:
            return cls._read(fh)

    @classmethod
    def _read(cls, fh: IO[bytes]) -> "NnmaModel":
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic bytes {magic!r}: not a model checkpoint")
        raw = fh.read(4)
        if len(raw) != 4:
            raise CheckpointError("truncated checkpoint: missing version")
        version = int(np.frombuffer(raw, dtype="<u4")[0])
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported format version {version}")
        raw = fh.read(8)
        if len(raw) != 8:
            raise CheckpointError("truncated checkpoint: missing header length")
        header_len = int(np.frombuffer(raw, dtype="<u8")[0])
        blob = fh.read(header_len)
        if len(blob) != header_len:
            raise CheckpointError("truncated checkpoint: incomplete header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable header: {exc}") from None

        required = {"d", "d_e", "d_m", "k", "labels", "n", "v", "vocab"}
        missing = required - set(header)
        if missing:
            raise CheckpointError(f"header missing fields {sorted(missing)}")
        if header["n"] != len(header["labels"]):
            raise CheckpointError("header n disagrees with label list")
        if header["v"] != len(header["vocab"]):
            raise CheckpointError("header v disagrees with vocabulary list")

        vocab = Vocabulary.from_tokens(header["vocab"])
        model = cls._zeros(vocab, header["labels"], header["d_e"],
                           header["d"], header["d_m"], header["k"])
        for p in model.parameters():
            nbytes = p.rows * p.cols * 8
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise CheckpointError("truncated checkpoint: incomplete parameters")
            p.data[:] = np.frombuffer(raw, dtype="<f8").reshape(p.rows, p.cols)
        if fh.read(1):
            raise CheckpointError("trailing bytes after parameter payload")
        return model

    @classmethod
    def _zeros(cls, vocab: Vocabulary, label_names: list[str], d_e: int,
               d: int, d_m: int, k: int) -> "NnmaModel":
        """Skeleton with zero tensors of the right shapes (load target)."""
        def lstm():
            width = d_e + d
            mats = [Tensor.zeros(d, width, requires_grad=True) for _ in range(4)]
            vecs = [Tensor.zeros(d, 1, requires_grad=True) for _ in range(4)]
            return LstmParams(*mats, *vecs)

        def arg_triple():
            return ArgAttentionParams(
                Tensor.zeros(2 * d, 2 * d, requires_grad=True),
                Tensor.zeros(2 * d, d_m, requires_grad=True),
                Tensor.zeros(1, 2 * d, requires_grad=True),
            )

        embeddings = EmbeddingMatrix(
            Tensor.zeros(d_e, len(vocab), requires_grad=True), d_e)
        enc1 = BiLstmParams(lstm(), lstm())
        enc2 = BiLstmParams(lstm(), lstm())
        levels = []
        for level in range(1, k + 1):
            width = 6 * d if level == 1 else 6 * d + d_m
            levels.append(AttentionLevelParams(
                Tensor.zeros(d_m, width, requires_grad=True),
                arg_triple(), arg_triple()))
        w_p = Tensor.zeros(len(label_names), 6 * d, requires_grad=True)
        b_p = Tensor.zeros(len(label_names), 1, requires_grad=True)
        return cls(vocab, label_names, embeddings, enc1, enc2, levels, w_p, b_p)
