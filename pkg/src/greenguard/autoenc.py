"""Fully-connected autoencoder: forward pass, backprop, SGD training, random search,
architecture shrinking and a checksummed binary model format."""

import enum
import json
import math
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._io import atomic_write
from .datasets import NormalizationParams
from .errors import (
    BadMagic,
    CorruptModel,
    DimensionMismatch,
    DivergedLoss,
    EmptySpace,
    EmptyTrainingSet,
    VersionMismatch,
)
from .schema import FEATURE_NAMES


class Activation(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"

    def __call__(self, z):
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.SIGMOID:
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        return z

    def derivative(self, z, a):
        """d activation / dz, given pre-activation ``z`` and output ``a``."""
        if self is Activation.RELU:
            return (z > 0).astype(z.dtype)
        if self is Activation.SIGMOID:
            return a * (1.0 - a)
        return np.ones_like(z)


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: Activation = Activation.RELU

    def __post_init__(self):
        if int(self.width) < 1:
            raise ValueError("layer width must be >= 1")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass(frozen=True)
class ArchitectureSpec:
    """Encoder and decoder layer stacks.

    The decoder's last layer reconstructs the input, so its width must equal
    ``input_dim``. The bottleneck (last encoder layer) must be narrower than the
    input unless ``overcomplete`` is set, which only test fixtures need.
    """

    input_dim: int
    encoder_layers: tuple
    decoder_layers: tuple
    overcomplete: bool = False

    def __post_init__(self):
        object.__setattr__(self, "encoder_layers", tuple(self.encoder_layers))
        object.__setattr__(self, "decoder_layers", tuple(self.decoder_layers))
        if not self.encoder_layers or not self.decoder_layers:
            raise ValueError("encoder and decoder need at least one layer each")
        if self.decoder_layers[-1].width != self.input_dim:
            raise ValueError("decoder output width must equal input_dim")
        if not self.overcomplete and self.encoder_layers[-1].width >= self.input_dim:
            raise ValueError("bottleneck must be narrower than the input")

    @property
    def layers(self):
        return self.encoder_layers + self.decoder_layers

    @property
    def hidden_widths(self):
        return [layer.width for layer in self.layers[:-1]]

    def shapes(self):
        dims = [self.input_dim] + [layer.width for layer in self.layers]
        return list(zip(dims[:-1], dims[1:]))

    def n_params(self):
        return sum(i * o + o for i, o in self.shapes())

    def describe(self):
        return "-".join(str(w) for w in [self.input_dim] + [layer.width for layer in self.layers])


def mirrored_architecture(input_dim, encoder_widths, hidden=Activation.RELU,
                          output=Activation.SIGMOID):
    """Symmetric stack, e.g. ``(24, 16, 8)`` -> ``d-24-16-8-16-24-d``."""
    encoder_widths = list(encoder_widths)
    enc = [LayerSpec(w, hidden) for w in encoder_widths]
    dec = [LayerSpec(w, hidden) for w in reversed(encoder_widths[:-1])]
    dec.append(LayerSpec(input_dim, output))
    return ArchitectureSpec(input_dim, enc, dec)


def default_architecture(input_dim=len(FEATURE_NAMES)):
    return mirrored_architecture(input_dim, (24, 16, 8))


def shrink_architecture(spec, fraction=0.20, drop_layers=False):
    """Cut every hidden width by ``fraction`` (floored, never below 1).

    With ``drop_layers`` the widest symmetric encoder/decoder pair is also removed
    (only when the encoder has more than one layer, so a bottleneck remains).
    """
    if not 0 <= fraction < 1:
        raise ValueError("fraction must be in [0, 1)")
    enc = list(spec.encoder_layers)
    dec = list(spec.decoder_layers)
    if drop_layers and len(enc) > 1:
        # encoder layer i mirrors decoder layer len(enc)-2-i; the bottleneck has no mirror
        candidates = range(len(enc) - 1)
        widest = max(candidates, key=lambda i: (enc[i].width, -i))
        mirror = len(enc) - 2 - widest
        del enc[widest]
        if 0 <= mirror < len(dec) - 1:
            del dec[mirror]

    def cut(layer):
        return replace(layer, width=max(1, math.floor(layer.width * (1 - fraction))))

    enc = [cut(layer) for layer in enc]
    dec = [cut(layer) for layer in dec[:-1]] + [dec[-1]]
    return ArchitectureSpec(spec.input_dim, enc, dec, spec.overcomplete)


RELU_BIAS_INIT = 0.01


@dataclass
class AutoencoderModel:
    spec: ArchitectureSpec
    weights: list
    biases: list
    normalization: NormalizationParams = None
    feature_names: tuple = FEATURE_NAMES
    trained_epochs: int = 0
    threshold: float = None
    metric: str = "mse"

    def __post_init__(self):
        shapes = self.spec.shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise DimensionMismatch("parameter list does not match the layer count")
        for (i, o), W, b in zip(shapes, self.weights, self.biases):
            if np.shape(W) != (i, o) or np.shape(b) != (o,):
                raise DimensionMismatch(f"expected W{(i, o)} and b({o},), got {np.shape(W)} and {np.shape(b)}")

    @classmethod
    def initialize(cls, spec, seed=0, **kwargs):
        """Glorot-uniform weights; ReLU biases start at 0.01 so no unit is born dead."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for (fan_in, fan_out), layer in zip(spec.shapes(), spec.layers):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            bias = RELU_BIAS_INIT if layer.activation is Activation.RELU else 0.0
            biases.append(np.full(fan_out, bias))
        return cls(spec, weights, biases, **kwargs)

    @property
    def input_dim(self):
        return self.spec.input_dim

    def n_params(self):
        return self.spec.n_params()

    def copy(self):
        return replace(self, weights=[W.copy() for W in self.weights],
                       biases=[b.copy() for b in self.biases])

    def parameters_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.weights + self.biases)


def _check_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim or x.ndim not in (1, 2):
        raise DimensionMismatch(f"expected {model.input_dim} features, got shape {x.shape}")
    return x


def _forward_all(model, X):
    """Pre-activations and activations for every layer (``acts[0]`` is the input)."""
    pre, acts = [], [X]
    a = X
    for W, b, layer in zip(model.weights, model.biases, model.spec.layers):
        z = a @ W + b
        a = layer.activation(z)
        pre.append(z)
        acts.append(a)
    return pre, acts


def forward(model, x):
    """Return ``(code, x_hat)`` for one vector or a batch of rows."""
    x = _check_input(model, x)
    single = x.ndim == 1
    X = x[None, :] if single else x
    _, acts = _forward_all(model, X)
    code = acts[len(model.spec.encoder_layers)]
    x_hat = acts[-1]
    if single:
        return code[0], x_hat[0]
    return code, x_hat


def reconstruct(model, X):
    return forward(model, X)[1]


def reconstruction_error(x, x_hat, metric="mse"):
    """Mean squared or mean absolute error over the last axis.

    Returns a float for vectors and an array of per-row errors for matrices.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionMismatch(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    diff = x_hat - x
    metric = metric.lower()
    if metric == "mse":
        err = np.mean(diff * diff, axis=-1)
    elif metric == "mae":
        err = np.mean(np.abs(diff), axis=-1)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return float(err) if np.ndim(err) == 0 else err


def row_errors(model, X, metric="mse"):
    X = _check_input(model, X)
    X = np.atleast_2d(X)
    return reconstruction_error(X, reconstruct(model, X), metric)


def loss_and_gradients(model, X):
    """Training objective over a batch and its parameter gradients.

    The objective is the squared reconstruction error summed over features and
    averaged over rows, i.e. ``input_dim`` times the mean MSE. Both share a
    minimizer; the unscaled sum keeps useful step sizes inside ``(0, 1]``.
    """
    X = np.atleast_2d(_check_input(model, X))
    pre, acts = _forward_all(model, X)
    diff = acts[-1] - X
    loss = float(np.sum(diff * diff) / X.shape[0])
    delta = 2.0 * diff / X.shape[0]
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for k in range(len(model.weights) - 1, -1, -1):
        layer = model.spec.layers[k]
        dz = delta * layer.activation.derivative(pre[k], acts[k + 1])
        grads_w[k] = acts[k].T @ dz
        grads_b[k] = dz.sum(axis=0)
        if k:
            delta = dz @ model.weights[k].T
    return loss, grads_w, grads_b


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.1
    epochs: int = 50
    batch_size: int = 16
    spec: ArchitectureSpec = field(default_factory=default_architecture)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in [0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def rows(self):
        for i, t in enumerate(self.train_loss):
            v = self.val_loss[i] if i < len(self.val_loss) else float("nan")
            yield i + 1, t, v


def _mean_mse(model, X):
    _, acts = _forward_all(model, X)
    diff = acts[-1] - X
    return float(np.mean(diff * diff))


def train(train_rows, hp=None, val_rows=None, normalization=None, feature_names=FEATURE_NAMES):
    """Fit an autoencoder with plain mini-batch SGD (see :func:`loss_and_gradients`).

    A learning rate of exactly 0 is accepted and leaves parameters untouched.
    The shuffle order and initialization derive from ``hp.seed`` only.

    Returns:
        ``(model, history)`` where ``history`` holds the full-pass training and
        validation MSE after every epoch.
    """
    hp = hp or Hyperparams()
    X = np.asarray(train_rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTrainingSet("no training rows")
    if X.shape[1] != hp.spec.input_dim:
        raise DimensionMismatch(f"rows have {X.shape[1]} features, architecture expects {hp.spec.input_dim}")
    V = None if val_rows is None or len(val_rows) == 0 else np.asarray(val_rows, dtype=np.float64)

    rng = np.random.default_rng(hp.seed)
    model = AutoencoderModel.initialize(hp.spec, seed=rng.integers(2**63),
                                        normalization=normalization, feature_names=tuple(feature_names))
    history = TrainHistory()
    n = X.shape[0]
    lr = hp.learning_rate
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(hp.epochs):
            order = rng.permutation(n)
            for start in range(0, n, hp.batch_size):
                batch = X[order[start:start + hp.batch_size]]
                _, gw, gb = loss_and_gradients(model, batch)
                for k in range(len(gw)):
                    model.weights[k] -= lr * gw[k]
                    model.biases[k] -= lr * gb[k]
            loss = _mean_mse(model, X)
            if not math.isfinite(loss) or not model.parameters_finite():
                raise DivergedLoss(f"loss became non-finite at epoch {epoch + 1}")
            history.train_loss.append(loss)
            if V is not None:
                history.val_loss.append(_mean_mse(model, V))
            model.trained_epochs = epoch + 1
    return model, history


# ---------------------------------------------------------------- random search

@dataclass(frozen=True)
class SearchSpace:
    """Ranges sampled uniformly by :func:`random_search`.

    ``learning_rate`` is a closed interval; the other fields are finite choice sets.
    ``encoder_widths`` holds encoder stacks that are mirrored into full architectures.
    """

    learning_rate: tuple = (0.01, 0.3)
    epochs: tuple = (50,)
    batch_size: tuple = (8, 16, 32)
    encoder_widths: tuple = ((24, 16, 8), (20, 10), (24, 12, 6), (16, 8))
    input_dim: int = len(FEATURE_NAMES)

    def validate(self):
        lo, hi = self.learning_rate
        if not (0 <= lo <= hi <= 1):
            raise EmptySpace("learning_rate interval is empty or outside [0, 1]")
        for name in ("epochs", "batch_size", "encoder_widths"):
            if not getattr(self, name):
                raise EmptySpace(f"no choices for {name}")

    def sample(self, rng):
        lo, hi = self.learning_rate
        lr = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        epochs = self.epochs[rng.integers(len(self.epochs))]
        batch = self.batch_size[rng.integers(len(self.batch_size))]
        widths = self.encoder_widths[rng.integers(len(self.encoder_widths))]
        seed = int(rng.integers(2**31))
        return Hyperparams(lr, int(epochs), int(batch), mirrored_architecture(self.input_dim, widths), seed)


@dataclass
class Trial:
    index: int
    hyperparams: Hyperparams
    val_mse: float
    n_params: int
    diverged: bool = False
    model: AutoencoderModel = None

    def rank_key(self):
        return (self.val_mse, self.n_params, self.index)


def _run_trial(index, hp, train_rows, val_rows):
    try:
        model, _ = train(train_rows, hp)
        val = _mean_mse(model, val_rows)
        if not math.isfinite(val):
            return Trial(index, hp, math.inf, hp.spec.n_params(), True)
        return Trial(index, hp, val, hp.spec.n_params(), False, model)
    except DivergedLoss:
        return Trial(index, hp, math.inf, hp.spec.n_params(), True)


def random_search(space, trials, train_rows, val_rows, seed=0, n_jobs=1, configs=None):
    """Train ``trials`` sampled configurations and rank them by validation MSE.

    Ties break on fewer parameters, then on lower trial index; diverged trials
    rank last. ``configs`` may supply explicit ``Hyperparams`` instead of sampling.

    Returns:
        ``(best_hyperparams, leaderboard)``, the leaderboard sorted best first.
    """
    if configs is None:
        space.validate()
        if trials < 1:
            raise ValueError("trials must be >= 1")
        rng = np.random.default_rng(seed)
        configs = [space.sample(rng) for _ in range(trials)]
    elif not configs:
        raise EmptySpace("no configurations supplied")
    train_rows = np.asarray(train_rows, dtype=np.float64)
    val_rows = np.asarray(val_rows, dtype=np.float64)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda ic: _run_trial(ic[0], ic[1], train_rows, val_rows),
                                    enumerate(configs)))
    else:
        results = [_run_trial(i, hp, train_rows, val_rows) for i, hp in enumerate(configs)]
    leaderboard = sorted(results, key=Trial.rank_key)
    return leaderboard[0].hyperparams, leaderboard


# ---------------------------------------------------------------- model file

MODEL_MAGIC = b"ZRZM"
MODEL_VERSION = 1
_PREFIX = struct.Struct("<4sHI")  # magic, version, crc32 of everything after this prefix


def model_to_bytes(model):
    header = {
        "feature_names": list(model.feature_names),
        "input_dim": model.spec.input_dim,
        "encoder": [[l.width, l.activation.value] for l in model.spec.encoder_layers],
        "decoder": [[l.width, l.activation.value] for l in model.spec.decoder_layers],
        "overcomplete": model.spec.overcomplete,
        "normalization": model.normalization.to_dict() if model.normalization is not None else None,
        "threshold": model.threshold,
        "metric": model.metric,
        "trained_epochs": model.trained_epochs,
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blocks = []
    for W, b in zip(model.weights, model.biases):
        blocks.append(np.ascontiguousarray(W, dtype="<f8").tobytes(order="C"))
        blocks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    body = struct.pack("<I", len(text)) + text + b"".join(blocks)
    return _PREFIX.pack(MODEL_MAGIC, MODEL_VERSION, zlib.crc32(body)) + body


def model_from_bytes(data):
    if len(data) < 4:
        if MODEL_MAGIC.startswith(data):
            raise CorruptModel("model file truncated")
        raise BadMagic("not a model file")
    if data[:4] != MODEL_MAGIC:
        raise BadMagic(f"not a model file (magic {data[:4]!r})")
    if len(data) < _PREFIX.size:
        raise CorruptModel("model file truncated")
    _, version, crc = _PREFIX.unpack_from(data)
    if version != MODEL_VERSION:
        raise VersionMismatch(f"model format version {version}, this build reads {MODEL_VERSION}")
    body = data[_PREFIX.size:]
    if zlib.crc32(body) != crc:
        raise CorruptModel("checksum mismatch")
    try:
        (hlen,) = struct.unpack_from("<I", body)
        header = json.loads(body[4:4 + hlen].decode("utf-8"))
        spec = ArchitectureSpec(
            header["input_dim"],
            [LayerSpec(w, a) for w, a in header["encoder"]],
            [LayerSpec(w, a) for w, a in header["decoder"]],
            header.get("overcomplete", False),
        )
        offset = 4 + hlen
        weights, biases = [], []
        for i, o in spec.shapes():
            W = np.frombuffer(body, dtype="<f8", count=i * o, offset=offset).reshape(i, o)
            offset += 8 * i * o
            b = np.frombuffer(body, dtype="<f8", count=o, offset=offset)
            offset += 8 * o
            weights.append(W.astype(np.float64))
            biases.append(b.astype(np.float64))
        if offset != len(body):
            raise CorruptModel("trailing bytes after parameter blocks")
    except CorruptModel:
        raise
    except (ValueError, KeyError, TypeError, struct.error) as exc:
        raise CorruptModel(f"unreadable model body: {exc}") from exc
    norm = header.get("normalization")
    return AutoencoderModel(
        spec, weights, biases,
        normalization=NormalizationParams.from_dict(norm) if norm else None,
        feature_names=tuple(header["feature_names"]),
        trained_epochs=header["trained_epochs"],
        threshold=header.get("threshold"),
        metric=header.get("metric", "mse"),
    )


def save_model(model, path):
    data = model_to_bytes(model)
    with atomic_write(path, "wb") as fh:
        fh.write(data)


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
