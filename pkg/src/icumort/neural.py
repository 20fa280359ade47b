"""Minimal reverse-mode neural kernel: dense, relu, dropout, embedding,
1-D convolution, global max-pool, softmax cross-entropy.

Everything is float64 numpy; gradients are exact analytic expressions and
are exercised against central finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class NetError(ValueError):
    pass


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


class Dense:
    def __init__(self, n_in, n_out, rng, zero_init=False):
        if zero_init:
            w = np.zeros((n_in, n_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
        self.W = Param(w)
        self.b = Param(np.zeros(n_out))

    def forward(self, x):
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, g):
        self.W.grad += self._x.T @ g
        self.b.grad += g.sum(axis=0)
        return g @ self.W.value.T

    def params(self):
        return [self.W, self.b]


class ReLU:
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, g):
        return np.where(self._mask, g, 0.0)

    def params(self):
        return []


class Dropout:
    """Inverted dropout: kept units scaled by 1/(1-rate) so eval is identity."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise NetError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, train, rng):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, g):
        if self._mask is None:
            return g
        return g * self._mask

    def params(self):
        return []


class Embedding:
    def __init__(self, vocab_size, dim, rng, init=None):
        if init is not None:
            init = np.asarray(init, dtype=float)
            if init.shape != (vocab_size, dim):
                raise NetError(
                    f"embedding init shape {init.shape} does not match "
                    f"({vocab_size}, {dim})")
            self.W = Param(init.copy())
        else:
            self.W = Param(rng.normal(0.0, 0.1, size=(vocab_size, dim)))

    def forward(self, ids):
        if ids.min() < 0 or ids.max() >= self.W.value.shape[0]:
            raise NetError("token id outside the embedding table")
        self._ids = ids
        return self.W.value[ids]

    def backward(self, g):
        np.add.at(self.W.grad, self._ids.ravel(),
                  g.reshape(-1, self.W.value.shape[1]))
        return None  # ids are not differentiable

    def params(self):
        return [self.W]


class Conv1D:
    """Valid 1-D convolution over the token axis: (n, L, E) -> (n, L-k+1, F)."""

    def __init__(self, width, n_in, filters, rng):
        self.width = width
        self.W = Param(rng.normal(0.0, np.sqrt(2.0 / (width * n_in)),
                                  size=(width, n_in, filters)))
        self.b = Param(np.zeros(filters))

    def forward(self, x):
        n, L, _ = x.shape
        L_out = L - self.width + 1
        if L_out < 1:
            raise NetError(f"sequence length {L} shorter than filter width "
                           f"{self.width}")
        self._x = x
        out = np.broadcast_to(self.b.value, (n, L_out, self.b.value.size)).copy()
        for o in range(self.width):
            out += np.tensordot(x[:, o:o + L_out, :], self.W.value[o],
                                axes=([2], [0]))
        assert out.shape[1] == L - self.width + 1
        return out

    def backward(self, g):
        x = self._x
        L_out = g.shape[1]
        dx = np.zeros_like(x)
        for o in range(self.width):
            self.W.grad[o] += np.tensordot(x[:, o:o + L_out, :], g,
                                           axes=([0, 1], [0, 1]))
            dx[:, o:o + L_out, :] += np.tensordot(g, self.W.value[o],
                                                  axes=([2], [1]))
        self.b.grad += g.sum(axis=(0, 1))
        return dx

    def params(self):
        return [self.W, self.b]


class GlobalMaxPool:
    """Max over the token axis; gradient goes to the first argmax only."""

    def forward(self, x):
        self._idx = np.argmax(x, axis=1)  # first occurrence on ties
        self._shape = x.shape
        return np.take_along_axis(x, self._idx[:, None, :], axis=1)[:, 0, :]

    def backward(self, g):
        dx = np.zeros(self._shape)
        np.put_along_axis(dx, self._idx[:, None, :], g[:, None, :], axis=1)
        return dx

    def params(self):
        return []


def softmax_probs(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy; returns (loss, gradient wrt logits)."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z[np.arange(n), labels] - logsum
    probs = softmax_probs(logits)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return float(-logp.mean()), grad / n


def layer_forward_backward(layer, inputs, upstream, train=False, rng=None):
    """One forward/backward pass; returns (outputs, input gradient).

    Parameter gradients accumulate on the layer's Param objects. Dropout
    needs train/rng; other layers ignore them.
    """
    for p in layer.params():
        p.zero_grad()
    if isinstance(layer, Dropout):
        out = layer.forward(inputs, train, rng)
    else:
        out = layer.forward(inputs)
    return out, layer.backward(upstream)


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            m[...] = b1 * m + (1 - b1) * p.grad
            v[...] = b2 * v + (1 - b2) * p.grad ** 2
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class MlpParams:
    hidden: int = 100
    dropout: float = 0.5
    learning_rate: float = 0.0005
    batch_size: int = 32
    max_epochs: int = 20
    patience: int | None = 3
    undersample_ratio: float | None = None


@dataclass
class CnnParams:
    widths: tuple = (3, 4, 5)
    filters: int = 64
    embed_dim: int = 64
    hidden: int = 128
    dropout: float = 0.5
    max_len: int = 512
    learning_rate: float = 0.0005
    batch_size: int = 32
    max_epochs: int = 20
    patience: int | None = 3
    undersample_ratio: float | None = None

    def validate(self):
        if len(set(self.widths)) != len(self.widths):
            raise NetError("convolution widths must be distinct")
        if self.max_len < max(self.widths):
            raise NetError("max_len shorter than the widest filter")


class MlpModel:
    def __init__(self, in_dim, params, seed):
        self.in_dim = in_dim
        self.hp = params
        self.seed = seed
        rng = np.random.default_rng([seed, 0])
        self.fc1 = Dense(in_dim, params.hidden, rng)
        self.relu = ReLU()
        self.drop = Dropout(params.dropout)
        self.fc2 = Dense(params.hidden, 2, rng, zero_init=True)

    def forward(self, X, train=False, rng=None):
        h = self.drop.forward(self.relu.forward(self.fc1.forward(X)),
                              train, rng)
        return self.fc2.forward(h)

    def backward(self, dlogits):
        g = self.fc2.backward(dlogits)
        g = self.drop.backward(g)
        g = self.relu.backward(g)
        return self.fc1.backward(g)

    def params(self):
        return self.fc1.params() + self.fc2.params()

    def header(self):
        return {"kind": "mlp", "in_dim": self.in_dim, "seed": self.seed,
                "hidden": self.hp.hidden, "dropout": self.hp.dropout}


class CnnFusionModel:
    """Embedding -> parallel conv banks -> max-pool -> concat structured
    -> FC1 + ReLU + dropout -> FC2 logits."""

    def __init__(self, vocab_size, structured_dim, params, seed,
                 embed_init=None):
        params.validate()
        self.vocab_size = vocab_size
        self.structured_dim = structured_dim
        self.hp = params
        self.seed = seed
        rng = np.random.default_rng([seed, 0])
        self.embedding = Embedding(vocab_size, params.embed_dim, rng,
                                   init=embed_init)
        self.convs = [Conv1D(k, params.embed_dim, params.filters, rng)
                      for k in params.widths]
        self.pools = [GlobalMaxPool() for _ in params.widths]
        concat_dim = params.filters * len(params.widths) + structured_dim
        self.fc1 = Dense(concat_dim, params.hidden, rng)
        self.relu = ReLU()
        self.drop = Dropout(params.dropout)
        self.fc2 = Dense(params.hidden, 2, rng, zero_init=True)

    def forward(self, inputs, train=False, rng=None):
        ids, structured = inputs
        ids = np.asarray(ids)
        if ids.ndim != 2:
            raise NetError("token ids must be (n, length)")
        structured = np.asarray(structured, dtype=float)
        if structured.shape != (ids.shape[0], self.structured_dim):
            raise NetError(
                f"structured block shape {structured.shape} does not match "
                f"({ids.shape[0]}, {self.structured_dim})")
        emb = self.embedding.forward(ids)
        pooled = [pool.forward(conv.forward(emb))
                  for conv, pool in zip(self.convs, self.pools)]
        self._concat_parts = [p.shape[1] for p in pooled] + [self.structured_dim]
        h = np.hstack(pooled + [structured])
        h = self.drop.forward(self.relu.forward(self.fc1.forward(h)),
                              train, rng)
        return self.fc2.forward(h)

    def backward(self, dlogits):
        g = self.fc2.backward(dlogits)
        g = self.drop.backward(g)
        g = self.relu.backward(g)
        g = self.fc1.backward(g)
        splits = np.cumsum(self._concat_parts)[:-1]
        parts = np.hsplit(g, splits)
        demb = None
        for conv, pool, gp in zip(self.convs, self.pools, parts):
            d = conv.backward(pool.backward(gp))
            demb = d if demb is None else demb + d
        self.embedding.backward(demb)
        return None

    def params(self):
        out = self.embedding.params()
        for conv in self.convs:
            out += conv.params()
        return out + self.fc1.params() + self.fc2.params()

    def header(self):
        return {"kind": "cnn", "vocab_size": self.vocab_size,
                "structured_dim": self.structured_dim, "seed": self.seed,
                "widths": list(self.hp.widths), "filters": self.hp.filters,
                "embed_dim": self.hp.embed_dim, "hidden": self.hp.hidden,
                "dropout": self.hp.dropout, "max_len": self.hp.max_len}


def pad_sequences(seqs, max_len, pad_id=0):
    """Front-aligned padding/truncation to a fixed length."""
    out = np.full((len(seqs), max_len), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        s = list(s)[:max_len]
        out[i, :len(s)] = s
    return out


def _undersample_rows(rows, y, ratio, rng):
    pos = rows[y[rows] == 1]
    neg = rows[y[rows] == 0]
    minority, majority = (pos, neg) if pos.size <= neg.size else (neg, pos)
    cap = int(ratio * minority.size)
    if majority.size <= cap:
        return rows
    keep = rng.choice(majority.size, size=cap, replace=False)
    out = np.concatenate([minority, majority[np.sort(keep)]])
    return np.sort(out)


def _fit(model, fetch, y, hp, seed):
    """Shared minibatch loop: Adam, seed-derived val split, patience-based
    early stopping with best-snapshot restore."""
    y = np.asarray(y).astype(np.int64)
    n = y.size
    if n == 0:
        raise NetError("empty training set")
    if len(np.unique(y)) < 2:
        raise NetError("training labels are single-class")
    rng = np.random.default_rng([seed, 1])
    perm = rng.permutation(n)
    if hp.patience is None:
        train_rows, val_rows = perm, None
    else:
        n_val = max(1, int(round(0.1 * n)))
        val_rows, train_rows = perm[:n_val], perm[n_val:]
        if train_rows.size == 0:
            raise NetError("training set too small for a validation split")
    if hp.undersample_ratio is not None:
        train_rows = _undersample_rows(np.sort(train_rows), y,
                                       hp.undersample_ratio, rng)

    opt = Adam(model.params(), hp.learning_rate)
    log = []
    best_val = np.inf
    best_snapshot = None
    bad_epochs = 0

    def eval_loss(rows):
        total, count = 0.0, 0
        for lo in range(0, rows.size, 256):
            batch = rows[lo:lo + 256]
            logits = model.forward(fetch(batch), train=False)
            loss, _ = softmax_xent(logits, y[batch])
            total += loss * batch.size
            count += batch.size
        return total / count

    for epoch in range(1, hp.max_epochs + 1):
        order = train_rows[rng.permutation(train_rows.size)]
        running, seen = 0.0, 0
        for lo in range(0, order.size, hp.batch_size):
            batch = order[lo:lo + hp.batch_size]
            logits = model.forward(fetch(batch), train=True, rng=rng)
            loss, dlogits = softmax_xent(logits, y[batch])
            for p in model.params():
                p.zero_grad()
            model.backward(dlogits)
            opt.step()
            running += loss * batch.size
            seen += batch.size
        entry = {"epoch": epoch, "train_loss": running / max(seen, 1)}
        if val_rows is not None:
            val_loss = eval_loss(val_rows)
            entry["val_loss"] = val_loss
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best_snapshot = [p.value.copy() for p in model.params()]
                bad_epochs = 0
            else:
                bad_epochs += 1
            log.append(entry)
            if bad_epochs >= hp.patience:
                entry["stopped_early"] = True
                break
        else:
            log.append(entry)

    if best_snapshot is not None:
        for p, saved in zip(model.params(), best_snapshot):
            p.value[...] = saved
    return log


def _as_dense_rows(X, rows):
    if sp.issparse(X):
        return np.asarray(X[rows].todense())
    return np.asarray(X, dtype=float)[rows]


def train_mlp(X, y, params=None, seed=0):
    """Dense d -> hidden -> 2 classifier; returns (model, per-epoch log)."""
    if params is None:
        params = MlpParams()
    d = X.shape[1]
    model = MlpModel(d, params, seed)
    log = _fit(model, lambda rows: _as_dense_rows(X, rows), y, params, seed)
    return model, log


def train_cnn_fusion(sequences, structured, y, params=None, seed=0,
                     vocab_size=None, embed_init=None):
    """Text CNN fused with a structured block; returns (model, log).

    sequences: iterable of token-id lists (padded/truncated to max_len here).
    structured: dense (n, d_s) block; d_s may be 0 for text-only models.
    """
    if params is None:
        params = CnnParams()
    params.validate()
    ids = pad_sequences(sequences, params.max_len)
    structured = np.asarray(structured, dtype=float)
    if structured.ndim != 2 or structured.shape[0] != ids.shape[0]:
        raise NetError("structured block must be (n, d_s)")
    if vocab_size is None:
        vocab_size = int(ids.max()) + 1 if ids.size else 1
    model = CnnFusionModel(vocab_size, structured.shape[1], params, seed,
                           embed_init=embed_init)
    log = _fit(model, lambda rows: (ids[rows], structured[rows]), y, params,
               seed)
    return model, log


def predict_proba_net(model, inputs, batch_size=256):
    """Class-1 probabilities with dropout off; deterministic."""
    if isinstance(model, MlpModel):
        X = inputs
        if X.shape[1] != model.in_dim:
            raise NetError(f"feature dimension {X.shape[1]} does not match "
                           f"model dimension {model.in_dim}")
        n = X.shape[0]
        fetch = lambda rows: _as_dense_rows(X, rows)
    elif isinstance(model, CnnFusionModel):
        ids, structured = inputs
        ids = np.asarray(ids)
        structured = np.asarray(structured, dtype=float)
        n = ids.shape[0]
        fetch = lambda rows: (ids[rows], structured[rows])
    else:
        raise NetError(f"unknown model type {type(model).__name__}")
    out = np.empty(n)
    for lo in range(0, n, batch_size):
        rows = np.arange(lo, min(lo + batch_size, n))
        probs = softmax_probs(model.forward(fetch(rows), train=False))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        out[rows] = probs[:, 1]
    return out


# ---------------------------------------------------------------------------
# Checkpoints and embedding files
# ---------------------------------------------------------------------------

def save_checkpoint(model, path):
    """JSON header line + concatenated little-endian float64 parameters."""
    header = model.header()
    header["shapes"] = [list(p.value.shape) for p in model.params()]
    blob = np.concatenate([p.value.ravel() for p in model.params()])
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(blob.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        blob = np.frombuffer(f.read(), dtype="<f8")
    if header["kind"] == "mlp":
        hp = MlpParams(hidden=header["hidden"], dropout=header["dropout"])
        model = MlpModel(header["in_dim"], hp, header["seed"])
    elif header["kind"] == "cnn":
        hp = CnnParams(widths=tuple(header["widths"]),
                       filters=header["filters"],
                       embed_dim=header["embed_dim"], hidden=header["hidden"],
                       dropout=header["dropout"], max_len=header["max_len"])
        model = CnnFusionModel(header["vocab_size"], header["structured_dim"],
                               hp, header["seed"])
    else:
        raise NetError(f"unknown checkpoint kind {header['kind']!r}")
    shapes = [tuple(s) for s in header["shapes"]]
    actual = [p.value.shape for p in model.params()]
    if shapes != actual:
        raise NetError("checkpoint shapes do not match the rebuilt model")
    total = sum(int(np.prod(s)) for s in shapes)
    if blob.size != total:
        raise NetError(
            f"checkpoint buffer holds {blob.size} values, expected {total}")
    offset = 0
    for p in model.params():
        size = p.value.size
        p.value[...] = blob[offset:offset + size].reshape(p.value.shape)
        offset += size
    if offset != blob.size:
        raise NetError("checkpoint buffer length mismatch")
    return model


def load_embedding_file(path):
    """'token v1 v2 ... vE' per line -> (token list, (n, E) matrix)."""
    tokens, rows = [], []
    dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            vec = [float(x) for x in parts[1:]]
            if dim is None:
                dim = len(vec)
                if dim == 0:
                    raise NetError(f"no values on line {lineno}")
            elif len(vec) != dim:
                raise NetError(f"inconsistent width at line {lineno}")
            tokens.append(parts[0])
            rows.append(vec)
    if not tokens:
        raise NetError("embedding file is empty")
    return tokens, np.asarray(rows)


def embedding_matrix_for_vocab(vocab_tokens, dim, seed, pretrained=None):
    """Rows: 0 = padding (zeros), 1 = unknown, then one per vocab token.

    Tokens found in the optional pretrained table keep their vectors;
    everything else draws from the seeded initializer.
    """
    rng = np.random.default_rng([seed, 2])
    V = len(vocab_tokens) + 2
    M = rng.normal(0.0, 0.1, size=(V, dim))
    M[0] = 0.0
    if pretrained is not None:
        tokens, matrix = pretrained
        if matrix.shape[1] != dim:
            raise NetError(f"pretrained width {matrix.shape[1]} does not "
                           f"match embed_dim {dim}")
        table = {t: i for i, t in enumerate(tokens)}
        for i, tok in enumerate(vocab_tokens):
            j = table.get(tok)
            if j is not None:
                M[i + 2] = matrix[j]
    return M


def tokens_to_ids(token_docs, vocab):
    """Map tokens through a Vocabulary to embedding rows (unk = 1, +2 shift)."""
    out = []
    for doc in token_docs:
        ids = []
        for t in doc:
            j = vocab.index.get(t)
            ids.append(1 if j is None else j + 2)
        out.append(ids)
    return out
