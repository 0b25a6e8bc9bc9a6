"""Attention-weighted LSTM encoder-decoder trained to predict subject IDs.

A dense sigmoid stack encodes each sample, a single LSTM cell compresses it
into a code, a learned affine projection of (input, previous hidden state,
previous cell state) yields softmax attention weights, and the attention-
weighted code feeds a dense decoder. After training, the attention-weighted
code is the deep feature handed to the downstream classifier.

All gradients are exact analytic backpropagation (verified against central
finite differences); the optimizer is Adam with bias correction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit as _sigmoid

from eegid.seeding import substream

MODEL_FORMAT = "eegid.attention_rnn"
MODEL_VERSION = 1


class NumericError(ArithmeticError):
    """Non-finite values appeared in a forward pass."""


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    output_dim: int = 8
    hidden_dim: int = 164
    encoder_dense_layers: int = 3
    lstm_cells: int = 164
    decoder_hidden: int = 164
    seq_len: int = 1
    learning_rate: float = 0.001
    l2_lambda: float = 0.001
    n_iter: int = 2000
    batch_count: int = 7
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "output_dim", "hidden_dim", "encoder_dense_layers",
                     "lstm_cells", "decoder_hidden", "seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")


@dataclass(frozen=True)
class DenseLayer:
    """One affine map x @ W + b with an optional sigmoid activation."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"  # "identity" or "sigmoid"


@dataclass(frozen=True)
class LstmCell:
    """Gate parameter blocks; each maps concat(x, h_prev) through an affine."""

    Wi: np.ndarray
    bi: np.ndarray
    Wf: np.ndarray
    bf: np.ndarray
    Wo: np.ndarray
    bo: np.ndarray
    Wm: np.ndarray
    bm: np.ndarray


@dataclass(frozen=True)
class DeepFeature:
    """Attention-weighted code for one sample, with its training label."""

    values: np.ndarray
    label: int | None = None


class ForwardResult(NamedTuple):
    logits: np.ndarray
    code: np.ndarray
    attention: np.ndarray
    c_att: np.ndarray


class AttentionRnn:
    """All encoder/attention/decoder parameters, keyed by name.

    Parameters live in an insertion-ordered dict of float64 arrays so that
    gradients, Adam state, and serialization all share one layout.
    """

    def __init__(self, config: NetworkConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: NetworkConfig) -> "AttentionRnn":
        """Create a model with all parameters uniform in [-0.1, 0.1]."""
        rng = substream(config.seed, "nn-init")
        he, h, dh, k = config.hidden_dim, config.lstm_cells, config.decoder_hidden, config.output_dim
        shapes: dict[str, tuple[int, ...]] = {}
        in_dim = config.input_dim
        for layer in range(config.encoder_dense_layers):
            shapes[f"enc{layer}_W"] = (in_dim, he)
            shapes[f"enc{layer}_b"] = (he,)
            in_dim = he
        for gate in ("i", "f", "o", "m"):
            shapes[f"lstm_W{gate}"] = (he + h, h)
            shapes[f"lstm_b{gate}"] = (h,)
        shapes["att_W"] = (he + 2 * h, h)
        shapes["att_b"] = (h,)
        shapes["dec_W"] = (h, dh)
        shapes["dec_b"] = (dh,)
        shapes["out_W"] = (dh, k)
        shapes["out_b"] = (k,)
        params = {name: rng.uniform(-0.1, 0.1, size=shape) for name, shape in shapes.items()}
        return cls(config, params)

    def encoder_layers(self) -> list[DenseLayer]:
        return [
            DenseLayer(self.params[f"enc{i}_W"], self.params[f"enc{i}_b"], "sigmoid")
            for i in range(self.config.encoder_dense_layers)
        ]

    def lstm_cell(self) -> LstmCell:
        p = self.params
        return LstmCell(p["lstm_Wi"], p["lstm_bi"], p["lstm_Wf"], p["lstm_bf"],
                        p["lstm_Wo"], p["lstm_bo"], p["lstm_Wm"], p["lstm_bm"])

    def attention_proj(self) -> DenseLayer:
        return DenseLayer(self.params["att_W"], self.params["att_b"], "identity")

    def decoder_layers(self) -> list[DenseLayer]:
        return [
            DenseLayer(self.params["dec_W"], self.params["dec_b"], "sigmoid"),
            DenseLayer(self.params["out_W"], self.params["out_b"], "identity"),
        ]

    def weight_names(self) -> list[str]:
        return [name for name in self.params if name.endswith("_W")]


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """Apply one affine layer (x @ W + b) and its activation."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.W.shape[0]:
        raise ValueError(f"input dim {x.shape[-1]} does not match layer dim {layer.W.shape[0]}")
    z = x @ layer.W + layer.b
    if layer.activation == "sigmoid":
        return _sigmoid(z)
    return z


def lstm_step(cell: LstmCell, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """One LSTM step; returns (h, c).

    Gates: i, f, o = sigmoid(affine(concat(x, h_prev))), m = tanh(affine(...)),
    then c = f*c_prev + i*m and h = o*tanh(c).
    """
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if x.shape[-1] + h_prev.shape[-1] != cell.Wi.shape[0]:
        raise ValueError(
            f"concat dim {x.shape[-1]} + {h_prev.shape[-1]} does not match gate dim {cell.Wi.shape[0]}"
        )
    s = np.concatenate([x, h_prev], axis=-1)
    i = _sigmoid(s @ cell.Wi + cell.bi)
    f = _sigmoid(s @ cell.Wf + cell.bf)
    o = _sigmoid(s @ cell.Wo + cell.bo)
    m = np.tanh(s @ cell.Wm + cell.bm)
    c = f * c_prev + i * m
    h = o * np.tanh(c)
    return h, c


def attention_weights(attn_proj: DenseLayer, x: np.ndarray, h_prev: np.ndarray,
                      c_prev: np.ndarray) -> np.ndarray:
    """Softmax-normalized attention from concat(x, h_prev, c_prev)."""
    q = np.concatenate([np.asarray(x, float), np.asarray(h_prev, float),
                        np.asarray(c_prev, float)], axis=-1)
    if q.shape[-1] != attn_proj.W.shape[0]:
        raise ValueError(
            f"concat dim {q.shape[-1]} does not match projection dim {attn_proj.W.shape[0]}"
        )
    return _softmax(q @ attn_proj.W + attn_proj.b)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _check_finite(arr: np.ndarray, where: str):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {where}")


def _forward_batch(model: AttentionRnn, X: np.ndarray) -> dict:
    """Vectorized forward over a batch; returns every tensor backprop needs."""
    cfg = model.config
    p = model.params
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    expected = cfg.seq_len * cfg.input_dim
    if X.shape[1] != expected:
        raise ValueError(f"sample length {X.shape[1]} does not match seq_len*input_dim {expected}")
    batch = X.shape[0]
    steps = X.reshape(batch, cfg.seq_len, cfg.input_dim)

    enc_acts: list[list[np.ndarray]] = []  # per step: [a0, a1, ..., aL]
    u = []
    for t in range(cfg.seq_len):
        acts = [steps[:, t, :]]
        a = acts[0]
        for layer in range(cfg.encoder_dense_layers):
            a = _sigmoid(a @ p[f"enc{layer}_W"] + p[f"enc{layer}_b"])
            _check_finite(a, f"encoder[{layer}] (step {t})")
            acts.append(a)
        enc_acts.append(acts)
        u.append(a)

    h = np.zeros((batch, cfg.lstm_cells))
    c = np.zeros((batch, cfg.lstm_cells))
    lstm_cache = []
    for t in range(cfg.seq_len):
        s = np.concatenate([u[t], h], axis=1)
        i = _sigmoid(s @ p["lstm_Wi"] + p["lstm_bi"])
        f = _sigmoid(s @ p["lstm_Wf"] + p["lstm_bf"])
        o = _sigmoid(s @ p["lstm_Wo"] + p["lstm_bo"])
        m = np.tanh(s @ p["lstm_Wm"] + p["lstm_bm"])
        c_prev, h_prev = c, h
        c = f * c_prev + i * m
        tc = np.tanh(c)
        h = o * tc
        _check_finite(h, f"lstm (step {t})")
        lstm_cache.append({"s": s, "i": i, "f": f, "o": o, "m": m,
                           "c_prev": c_prev, "h_prev": h_prev, "tc": tc})

    last = lstm_cache[-1]
    q = np.concatenate([u[-1], last["h_prev"], last["c_prev"]], axis=1)
    watt = _softmax(q @ p["att_W"] + p["att_b"])
    _check_finite(watt, "attention")

    code = h
    c_att = code * watt
    d = _sigmoid(c_att @ p["dec_W"] + p["dec_b"])
    _check_finite(d, "decoder_hidden")
    logits = d @ p["out_W"] + p["out_b"]
    _check_finite(logits, "output")

    return {"X": X, "enc_acts": enc_acts, "u": u, "lstm": lstm_cache, "q": q,
            "watt": watt, "code": code, "c_att": c_att, "d": d, "logits": logits}


def forward(model: AttentionRnn, x: np.ndarray) -> ForwardResult:
    """Run one sample (length seq_len*input_dim) through the network."""
    cache = _forward_batch(model, np.asarray(x, dtype=np.float64)[None, :]
                           if np.asarray(x).ndim == 1 else np.asarray(x, dtype=np.float64))
    squeeze = np.asarray(x).ndim == 1
    take = (lambda a: a[0]) if squeeze else (lambda a: a)
    return ForwardResult(take(cache["logits"]), take(cache["code"]),
                         take(cache["watt"]), take(cache["c_att"]))


def l2_penalty(model: AttentionRnn, l2_lambda: float) -> float:
    """lambda * sum of squared entries over weight matrices (biases excluded)."""
    return l2_lambda * sum(
        float(np.sum(v * v)) for name, v in model.params.items() if name.endswith("_W")
    )


def loss(logits: np.ndarray, y_onehot: np.ndarray, model: AttentionRnn,
         l2_lambda: float) -> float:
    """Mean softmax cross-entropy plus the l2 weight penalty."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y_onehot = np.atleast_2d(np.asarray(y_onehot, dtype=np.float64))
    log_p = _log_softmax(logits)
    data = -float(np.sum(y_onehot * log_p)) / logits.shape[0]
    return data + l2_penalty(model, l2_lambda)


def _loss_and_gradients(model: AttentionRnn, X: np.ndarray, y_onehot: np.ndarray):
    """Mean loss over the batch and its exact gradient for every parameter."""
    cfg = model.config
    p = model.params
    cache = _forward_batch(model, X)
    batch = cache["X"].shape[0]
    y_onehot = np.asarray(y_onehot, dtype=np.float64)

    log_p = _log_softmax(cache["logits"])
    total = -float(np.sum(y_onehot * log_p)) / batch + l2_penalty(model, cfg.l2_lambda)

    grads = {name: np.zeros_like(value) for name, value in p.items()}

    dlogits = (np.exp(log_p) - y_onehot) / batch
    d = cache["d"]
    grads["out_W"] += d.T @ dlogits
    grads["out_b"] += dlogits.sum(axis=0)
    dd = dlogits @ p["out_W"].T

    dzd = dd * d * (1.0 - d)
    grads["dec_W"] += cache["c_att"].T @ dzd
    grads["dec_b"] += dzd.sum(axis=0)
    dc_att = dzd @ p["dec_W"].T

    watt, code = cache["watt"], cache["code"]
    d_code = dc_att * watt
    d_watt = dc_att * code
    # softmax backward: dz_j = w_j * (dw_j - sum_k dw_k w_k)
    dwprime = watt * (d_watt - (d_watt * watt).sum(axis=1, keepdims=True))
    grads["att_W"] += cache["q"].T @ dwprime
    grads["att_b"] += dwprime.sum(axis=0)
    dq = dwprime @ p["att_W"].T
    he, h = cfg.hidden_dim, cfg.lstm_cells
    du_att, dh_att, dc_state_att = dq[:, :he], dq[:, he:he + h], dq[:, he + h:]

    du = [np.zeros((batch, he)) for _ in range(cfg.seq_len)]
    dh_next = d_code
    dc_next = np.zeros_like(d_code)
    for t in range(cfg.seq_len - 1, -1, -1):
        step = cache["lstm"][t]
        i, f, o, m, tc, c_prev, s = (step["i"], step["f"], step["o"], step["m"],
                                     step["tc"], step["c_prev"], step["s"])
        dh = dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        df = dc * c_prev
        di = dc * m
        dm = dc * i
        dzi = di * i * (1.0 - i)
        dzf = df * f * (1.0 - f)
        dzo = do * o * (1.0 - o)
        dzm = dm * (1.0 - m * m)
        grads["lstm_Wi"] += s.T @ dzi
        grads["lstm_bi"] += dzi.sum(axis=0)
        grads["lstm_Wf"] += s.T @ dzf
        grads["lstm_bf"] += dzf.sum(axis=0)
        grads["lstm_Wo"] += s.T @ dzo
        grads["lstm_bo"] += dzo.sum(axis=0)
        grads["lstm_Wm"] += s.T @ dzm
        grads["lstm_bm"] += dzm.sum(axis=0)
        ds = dzi @ p["lstm_Wi"].T + dzf @ p["lstm_Wf"].T + dzo @ p["lstm_Wo"].T + dzm @ p["lstm_Wm"].T
        du[t] += ds[:, :he]
        dh_next = ds[:, he:]
        dc_next = dc * f
        if t == cfg.seq_len - 1:
            du[t] += du_att
            dh_next = dh_next + dh_att
            dc_next = dc_next + dc_state_att

    for t in range(cfg.seq_len):
        acts = cache["enc_acts"][t]
        da = du[t]
        for layer in range(cfg.encoder_dense_layers - 1, -1, -1):
            a = acts[layer + 1]
            dz = da * a * (1.0 - a)
            grads[f"enc{layer}_W"] += acts[layer].T @ dz
            grads[f"enc{layer}_b"] += dz.sum(axis=0)
            da = dz @ p[f"enc{layer}_W"].T

    if cfg.l2_lambda:
        for name, value in p.items():
            if name.endswith("_W"):
                grads[name] += 2.0 * cfg.l2_lambda * value

    return total, grads


def gradients(model: AttentionRnn, X: np.ndarray, y_onehot: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic gradients of the mean batch loss w.r.t. every parameter."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("gradient batch is empty")
    _, grads = _loss_and_gradients(model, X, np.atleast_2d(y_onehot))
    return grads


@dataclass
class AdamState:
    """First/second moment estimates plus the shared timestep."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_model(cls, model: AttentionRnn) -> "AdamState":
        return cls(m={k: np.zeros_like(v) for k, v in model.params.items()},
                   v={k: np.zeros_like(v) for k, v in model.params.items()})


def adam_step(model: AttentionRnn, state: AdamState, grads: dict[str, np.ndarray],
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, applied to the model in place."""
    state.t += 1
    t = state.t
    for name, g in grads.items():
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        m_hat = state.m[name] / (1.0 - beta1 ** t)
        v_hat = state.v[name] / (1.0 - beta2 ** t)
        model.params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train(model: AttentionRnn, features: np.ndarray, labels: np.ndarray,
          config: NetworkConfig | None = None) -> list[float]:
    """Train in place for config.n_iter iterations; returns per-iteration loss.

    The training set is shuffled once (seeded), cut into batch_count equal
    parts with the remainder in the last batch, and iterations cycle over
    those batches. Fully deterministic given config.seed.
    """
    cfg = config or model.config
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if n == 0:
        raise ValueError("training dataset is empty")
    if labels.min() < 0 or labels.max() >= cfg.output_dim:
        raise ValueError(f"labels must lie in [0, {cfg.output_dim})")

    y = np.zeros((n, cfg.output_dim))
    y[np.arange(n), labels] = 1.0

    order = substream(cfg.seed, "nn-batches").permutation(n)
    n_batches = min(cfg.batch_count, n)
    base = n // n_batches
    bounds = [(k * base, (k + 1) * base if k < n_batches - 1 else n) for k in range(n_batches)]
    batches = [order[lo:hi] for lo, hi in bounds]

    state = AdamState.for_model(model)
    history = []
    for it in range(cfg.n_iter):
        idx = batches[it % n_batches]
        batch_loss, grads = _loss_and_gradients(model, features[idx], y[idx])
        adam_step(model, state, grads, cfg.learning_rate)
        history.append(batch_loss)
    return history


def extract_features(model: AttentionRnn, samples: np.ndarray,
                     labels: np.ndarray | None = None) -> list[DeepFeature]:
    """Attention-weighted code per sample; the decoder is not applied."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    cache = _forward_batch(model, samples)
    c_att = cache["c_att"]
    return [
        DeepFeature(values=c_att[row].copy(),
                    label=None if labels is None else int(labels[row]))
        for row in range(c_att.shape[0])
    ]


def feature_matrix(model: AttentionRnn, samples: np.ndarray) -> np.ndarray:
    """Attention-weighted codes for many samples as one [n, lstm_cells] array."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    return _forward_batch(model, samples)["c_att"]


def save_model(model: AttentionRnn, path: str | Path, pipeline: dict | None = None):
    """Write config + parameters (plus optional pipeline metadata) as JSON."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "params": {name: value.tolist() for name, value in model.params.items()},
    }
    if pipeline is not None:
        doc["pipeline"] = pipeline
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_model(path: str | Path) -> AttentionRnn:
    """Inverse of save_model; round-trips parameters at full precision."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not an attention-rnn model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    config = NetworkConfig(**doc["config"])
    params = {name: np.asarray(value, dtype=np.float64) for name, value in doc["params"].items()}
    return AttentionRnn(config, params)


def load_pipeline_metadata(path: str | Path) -> dict | None:
    """Pipeline block (band, rate, DC offset) stored next to a saved model."""
    doc = json.loads(Path(path).read_text())
    return doc.get("pipeline")
