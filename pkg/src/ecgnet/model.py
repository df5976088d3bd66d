"""Dense-block 1-D CNN trunk with attention-GRU and direct softmax heads.

Two architectures share one trunk:

* ``branched`` - the trunk feeds a GRU/attention head and a direct
  (time-averaged) head; their softmax outputs are averaged.
* ``stacked`` - trunk, GRU/attention head, softmax; nothing else.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ecgnet.dsp import round_half_up
from ecgnet.engine import ops
from ecgnet.engine.tensor import Parameter, Tensor, get_dtype, no_grad
from ecgnet.errors import InvalidSpec, InvalidValue, ShapeMismatch, UnknownField

ARCHITECTURES = ("branched", "stacked")


@dataclass(frozen=True)
class ModelSpec:
    filter_size: int = 8
    initial_filters: int = 48
    growth_rate: int = 24
    convs_per_block: int = 4
    n_blocks: int = 4
    compression: float = 0.8
    pool_size: int = 4
    transition_strides: tuple = (4, 4, 4, 1)
    gru_units: int = 64
    gru_seq_len: int = 28
    dropout: float = 0.25
    n_classes: int = 5
    architecture: str = "branched"
    input_length: int = 1800

    def __post_init__(self):
        object.__setattr__(self, "transition_strides", tuple(int(s) for s in self.transition_strides))
        for name in ("filter_size", "initial_filters", "growth_rate", "convs_per_block",
                     "n_blocks", "pool_size", "gru_units", "gru_seq_len", "n_classes", "input_length"):
            if int(getattr(self, name)) < 1:
                raise InvalidValue(f"{name} must be >= 1")
        if not 0 < self.compression <= 1:
            raise InvalidValue("compression must be in (0, 1]")
        if not 0 <= self.dropout < 1:
            raise InvalidValue("dropout must be in [0, 1)")
        if self.architecture not in ARCHITECTURES:
            raise InvalidValue(f"architecture must be one of {ARCHITECTURES}")
        if any(s < 1 for s in self.transition_strides):
            raise InvalidValue("transition strides must be >= 1")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["transition_strides"] = list(self.transition_strides)
        return d

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise UnknownField(f"unknown model fields: {sorted(unknown)}")
        return cls(**data)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class TrunkPlan:
    lengths: tuple
    channels: tuple

    @property
    def out_channels(self):
        return self.channels[-1]


def compressed(channels, rate):
    return max(1, round_half_up(rate * channels))


def trunk_plan(spec):
    """Sequence lengths after each transition and the channel chain.

    Raises :class:`InvalidSpec` unless the trunk output length equals
    ``gru_seq_len``.
    """
    if len(spec.transition_strides) != spec.n_blocks:
        raise InvalidSpec(f"{spec.n_blocks} blocks but {len(spec.transition_strides)} transition strides")
    length, ch = spec.input_length, spec.initial_filters
    lengths, channels = [length], [ch]
    for stride in spec.transition_strides:
        ch += spec.convs_per_block * spec.growth_rate
        channels.append(ch)
        ch = compressed(ch, spec.compression)
        channels.append(ch)
        if stride > 1:
            if spec.pool_size > length:
                raise InvalidSpec(f"pool size {spec.pool_size} exceeds sequence length {length}")
            length = (length - spec.pool_size) // stride + 1
        lengths.append(length)
    if length != spec.gru_seq_len:
        raise InvalidSpec(
            f"trunk reduces {spec.input_length} samples to {length}, not gru_seq_len={spec.gru_seq_len}"
        )
    return TrunkPlan(tuple(lengths), tuple(channels))


class BuiltModel:
    """Named parameters, batch-norm buffers and the forward pass."""

    def __init__(self, spec, params, buffers, plan):
        self.spec = spec
        self.params = params
        self.buffers = buffers
        self.plan = plan

    # parameter handling -------------------------------------------------

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def snapshot(self):
        return ({k: p.data.copy() for k, p in self.params.items()},
                {k: b.copy() for k, b in self.buffers.items()})

    def restore(self, snap):
        values, buffers = snap
        for k, v in values.items():
            self.params[k].data[...] = v
        for k, v in buffers.items():
            self.buffers[k][...] = v

    @property
    def dtype(self):
        return next(iter(self.params.values())).data.dtype

    # layers -------------------------------------------------------------

    def _conv_bn_relu(self, prefix, x, mode):
        p = self.params
        y = ops.conv1d(x, p[prefix + ".conv.w"], p[prefix + ".conv.b"])
        y = ops.batch_norm1d(y, p[prefix + ".bn.gamma"], p[prefix + ".bn.beta"],
                             self.buffers[prefix + ".bn.running_mean"],
                             self.buffers[prefix + ".bn.running_var"], mode)
        return ops.relu(y)

    def dense_block(self, i, x, mode):
        h = x
        for j in range(self.spec.convs_per_block):
            y = self._conv_bn_relu(f"block{i}.layer{j}", h, mode)
            h = ops.concat_channels(h, y)
        return h

    def transition(self, i, x, mode, stride):
        y = self._conv_bn_relu(f"trans{i}", x, mode)
        if stride > 1:
            y = ops.avg_pool1d(y, self.spec.pool_size, stride)
        return y

    def trunk(self, x, mode="infer", rng=None, taps=None):
        spec = self.spec
        h = self._conv_bn_relu("stem", x, mode)
        for i, stride in enumerate(spec.transition_strides):
            h = self.dense_block(i, h, mode)
            h = self.transition(i, h, mode, stride)
            if taps is not None and i == spec.n_blocks - 1:
                taps["trunk"] = h.data
            h = ops.dropout(h, spec.dropout, mode, rng)
        return h

    def gru_head(self, trunk_out, mode="infer", rng=None, taps=None):
        p = self.params
        states = ops.gru_forward(trunk_out, p["gru.w_in"], p["gru.w_rec"], p["gru.bias"])
        pooled, alpha = ops.attention_pool(states, p["attn.w"], p["attn.b"])
        if taps is not None:
            taps["gru_states"] = states.data
            taps["attention"] = alpha
        pooled = ops.dropout(pooled, self.spec.dropout, mode, rng)
        return ops.dense(pooled, p["head_gru.w"], p["head_gru.b"])

    def direct_head(self, trunk_out):
        p = self.params
        return ops.dense(ops.mean_time(trunk_out), p["head_direct.w"], p["head_direct.b"])

    def heads(self, trunk_out, mode="infer", rng=None, taps=None):
        """Class probabilities from a trunk output."""
        probs_gru = ops.softmax(self.gru_head(trunk_out, mode, rng, taps))
        if self.spec.architecture == "stacked":
            return probs_gru
        probs_direct = ops.softmax(self.direct_head(trunk_out))
        return ops.scale(ops.add(probs_gru, probs_direct), 0.5)

    def _prepare(self, batch):
        x = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[1:] != (self.spec.input_length, 1):
            raise ShapeMismatch(f"expected [b, {self.spec.input_length}, 1] input, got {x.shape}")
        return Tensor(x, dtype=self.dtype)

    def forward(self, batch, mode="infer", rng=None, taps=None):
        x = self._prepare(batch)
        return self.heads(self.trunk(x, mode, rng, taps), mode, rng, taps)

    __call__ = forward

    def loss(self, batch, targets, mode="train", rng=None):
        """``(probs, loss)`` for one-hot ``targets``.

        The branched model is scored on its merged probabilities; the
        stacked model uses a fused softmax cross-entropy on its logits.
        """
        x = self._prepare(batch)
        h = self.trunk(x, mode, rng)
        if self.spec.architecture == "stacked":
            return ops.softmax_cross_entropy(self.gru_head(h, mode, rng), targets)
        probs = self.heads(h, mode, rng)
        return probs.data, ops.nll_loss(probs, targets)

    def predict_proba(self, samples, batch_size=50):
        out = []
        with no_grad():
            for i in range(0, len(samples), batch_size):
                out.append(self.forward(samples[i : i + batch_size], mode="infer").data)
        if not out:
            return np.zeros((0, self.spec.n_classes))
        return np.concatenate(out)


def model_forward(model, batch, mode="infer", taps=False, rng=None):
    """Run ``model``; with ``taps=True`` also return the activation taps."""
    if not taps:
        return model.forward(batch, mode, rng).data
    captured = {}
    probs = model.forward(batch, mode, rng, captured)
    return probs.data, captured


def _uniform(rng, shape, limit, dtype):
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class _Builder:
    rng: np.random.Generator
    dtype: object
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def add(self, name, value):
        self.params[name] = Parameter(value, name=name, dtype=self.dtype)

    def conv_bn(self, prefix, k, c_in, c_out):
        self.add(prefix + ".conv.w", _uniform(self.rng, (k, c_in, c_out), math.sqrt(6.0 / (k * c_in)), self.dtype))
        self.add(prefix + ".conv.b", np.zeros(c_out))
        self.add(prefix + ".bn.gamma", np.ones(c_out))
        self.add(prefix + ".bn.beta", np.zeros(c_out))
        self.buffers[prefix + ".bn.running_mean"] = np.zeros(c_out, dtype=self.dtype)
        self.buffers[prefix + ".bn.running_var"] = np.ones(c_out, dtype=self.dtype)

    def dense(self, prefix, d_in, d_out):
        self.add(prefix + ".w", _uniform(self.rng, (d_in, d_out), 1.0 / math.sqrt(d_in), self.dtype))
        self.add(prefix + ".b", np.zeros(d_out))


def build_model(spec=ModelSpec(), seed=0):
    """Build either architecture from ``spec`` with seeded initialisation."""
    plan = trunk_plan(spec)
    b = _Builder(np.random.default_rng(seed), get_dtype())
    k, g = spec.filter_size, spec.growth_rate
    b.conv_bn("stem", k, 1, spec.initial_filters)
    ch = spec.initial_filters
    for i in range(spec.n_blocks):
        for j in range(spec.convs_per_block):
            b.conv_bn(f"block{i}.layer{j}", k, ch + j * g, g)
        ch += spec.convs_per_block * g
        out = compressed(ch, spec.compression)
        b.conv_bn(f"trans{i}", 1, ch, out)
        ch = out

    u = spec.gru_units
    lim = 1.0 / math.sqrt(u)
    b.add("gru.w_in", _uniform(b.rng, (ch, 3 * u), lim, b.dtype))
    b.add("gru.w_rec", _uniform(b.rng, (u, 3 * u), lim, b.dtype))
    b.add("gru.bias", np.zeros(3 * u))
    b.add("attn.w", _uniform(b.rng, (u,), lim, b.dtype))
    b.add("attn.b", np.zeros(1))
    b.dense("head_gru", u, spec.n_classes)
    if spec.architecture == "branched":
        b.dense("head_direct", ch, spec.n_classes)
    return BuiltModel(spec, b.params, b.buffers, plan)


def build_branched_model(spec=ModelSpec(), seed=0):
    return build_model(dataclasses.replace(spec, architecture="branched"), seed)


def build_stacked_model(spec=ModelSpec(), seed=0):
    return build_model(dataclasses.replace(spec, architecture="stacked"), seed)


def dense_block_forward(model, block, x, mode="infer"):
    return model.dense_block(block, x if isinstance(x, Tensor) else Tensor(x), mode)


def transition_forward(model, block, x, mode="infer"):
    x = x if isinstance(x, Tensor) else Tensor(x)
    return model.transition(block, x, mode, model.spec.transition_strides[block])


TOY_SPEC = ModelSpec(
    filter_size=3,
    initial_filters=16,
    growth_rate=12,
    convs_per_block=2,
    n_blocks=1,
    compression=0.8,
    pool_size=4,
    transition_strides=(4,),
    gru_units=16,
    gru_seq_len=16,
    dropout=0.25,
    input_length=64,
)
