"""Molecule value oracles and the offline trainer for the learned one.

The learned model maps a feature vector ``x`` to

    V(x) = softplus(w2 . tanh(W1 x + b1) + b2)

and is fitted on best-route tuples ``(m, v, best reaction, candidates)`` by
minimising, averaged over tuples,

    (V(m) - v)^2 + lam * mean_{j != best} max(0, v + eps - c_j - sum_{m' in S_j} V(m'))

with plain minibatch gradient descent.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

MODEL_FORMAT = "retrostar-value-mlp"


class DimensionMismatch(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LearnedModel:
    """Two dense layers (tanh between) and a softplus output."""

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: float):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = float(b2)
        h, d = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (h,):
            raise DimensionMismatch("inconsistent layer shapes")
        self.history: list[float] = []

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int = 128, seed: int = 0,
             output_bias: float = 0.0) -> "LearnedModel":
        if input_dim < 1 or hidden_dim < 1:
            raise ValueError("dimensions must be positive")
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, 1.0 / math.sqrt(input_dim), size=(hidden_dim, input_dim))
        w2 = rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), size=hidden_dim)
        return cls(w1, np.zeros(hidden_dim), w2, output_bias)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise DimensionMismatch(f"expected {self.input_dim} features, got {x.shape[-1]}")
        return x

    def forward(self, x: np.ndarray):
        """Predictions for a batch ``x`` of shape (n, input_dim), plus the cache for backprop."""
        x = self._check(np.atleast_2d(x))
        hidden = np.tanh(x @ self.w1.T + self.b1)
        z = hidden @ self.w2 + self.b2
        return _softplus(z), (x, hidden, z)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def __call__(self, x: np.ndarray) -> float:
        return float(self.predict(x)[0])

    def backward(self, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given dLoss/dV for each row of the batch."""
        x, hidden, z = cache
        gz = grad_out * _sigmoid(z)
        g_w2 = hidden.T @ gz
        g_b2 = np.sum(gz)
        gh = np.outer(gz, self.w2) * (1.0 - hidden ** 2)
        return {"w1": gh.T @ x, "b1": gh.sum(axis=0), "w2": g_w2, "b2": np.asarray(g_b2)}

    # flat parameter view, used by the optimiser and gradient checks
    def get_params(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    def set_params(self, flat: np.ndarray) -> None:
        h, d = self.w1.shape
        flat = np.asarray(flat, dtype=np.float64)
        i = 0
        self.w1 = flat[i:i + h * d].reshape(h, d).copy(); i += h * d
        self.b1 = flat[i:i + h].copy(); i += h
        self.w2 = flat[i:i + h].copy(); i += h
        self.b2 = float(flat[i])

    @staticmethod
    def flatten_grads(g: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([g["w1"].ravel(), g["b1"], g["w2"], np.atleast_1d(g["b2"])])

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "activation": "tanh",
            "transform": "softplus",
            "w1": self.w1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "LearnedModel":
        if obj.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a {MODEL_FORMAT} document")
        if obj.get("activation") != "tanh" or obj.get("transform") != "softplus":
            raise ValueError("unsupported activation/transform")
        d, h = int(obj["input_dim"]), int(obj["hidden_dim"])
        w1 = np.asarray(obj["w1"], dtype=np.float64)
        if w1.size != h * d:
            raise DimensionMismatch(f"w1 has {w1.size} entries, expected {h}x{d}")
        b1, w2 = np.asarray(obj["b1"], dtype=np.float64), np.asarray(obj["w2"], dtype=np.float64)
        if b1.shape != (h,) or w2.shape != (h,):
            raise DimensionMismatch("b1/w2 must have hidden_dim entries")
        return cls(w1.reshape(h, d), b1, w2, float(obj["b2"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LearnedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class OracleKind(str, enum.Enum):
    ZERO = "zero"
    TABLE = "table"
    LEARNED = "learned"


class ValueOracle:
    """Estimate of the cost to make a molecule, callable on molecule ids.

    Table lookups fall back to 0 for unknown ids; learned oracles featurize ids
    with ``featurizer`` (hashed id fingerprints by default).
    """

    def __init__(self, kind: OracleKind | str = OracleKind.ZERO, table: Mapping[str, float] | None = None,
                 model: LearnedModel | None = None,
                 featurizer: Callable[[str], np.ndarray] | None = None):
        self.kind = OracleKind(kind)
        self.table = dict(table or {})
        self.model = model
        self._featurizer = featurizer
        if self.kind is OracleKind.TABLE:
            for k, v in self.table.items():
                if not (v >= 0.0) or math.isinf(v):
                    raise ValueError(f"table value for {k!r} must be finite and >= 0, got {v!r}")
        if self.kind is OracleKind.LEARNED and model is None:
            raise ValueError("learned oracle needs a model")
        self._memo: dict[str, float] = {}

    @classmethod
    def zero(cls) -> "ValueOracle":
        return cls(OracleKind.ZERO)

    @classmethod
    def from_table(cls, table: Mapping[str, float]) -> "ValueOracle":
        return cls(OracleKind.TABLE, table=table)

    @classmethod
    def learned(cls, model: LearnedModel, featurizer=None) -> "ValueOracle":
        return cls(OracleKind.LEARNED, model=model, featurizer=featurizer)

    def featurize(self, mol_id: str) -> np.ndarray:
        if self._featurizer is not None:
            return self._featurizer(mol_id)
        from .domains.routes import hash_features
        return hash_features(mol_id, self.model.input_dim)

    def evaluate(self, x) -> float:
        """Value for a molecule id, or for a feature vector (learned kind only)."""
        if self.kind is OracleKind.ZERO:
            return 0.0
        if isinstance(x, str):
            if self.kind is OracleKind.TABLE:
                return float(self.table.get(x, 0.0))
            if x not in self._memo:
                self._memo[x] = self._model_value(self.featurize(x))
            return self._memo[x]
        if self.kind is OracleKind.TABLE:
            raise TypeError("table oracles are keyed by molecule id")
        return self._model_value(x)

    def _model_value(self, features) -> float:
        val = self.model(features)
        if not math.isfinite(val):
            raise FloatingPointError(f"model produced {val!r}")
        return max(val, 0.0)

    __call__ = evaluate

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_memo"] = {}
        return state


def load_oracle(text: str) -> ValueOracle:
    """Parse ``zero``, ``table:PATH`` (JSON object id -> value) or ``model:PATH``."""
    if text == "zero":
        return ValueOracle.zero()
    kind, _, path = text.partition(":")
    if kind == "table" and path:
        return ValueOracle.from_table(json.loads(Path(path).read_text(encoding="utf-8")))
    if kind == "model" and path:
        return ValueOracle.learned(LearnedModel.load(path))
    raise ValueError(f"bad oracle {text!r}; expected zero, table:PATH or model:PATH")


# -- training ----------------------------------------------------------------

@dataclass
class RouteTuple:
    target_features: np.ndarray
    v: float
    best_reaction: int
    candidates: list[tuple[float, list[np.ndarray]]]

    def __post_init__(self):
        if not 0 <= self.best_reaction < len(self.candidates):
            raise IndexError(f"best_reaction {self.best_reaction} out of range")
        if not (self.v >= 0.0) or math.isinf(self.v):
            raise ValueError(f"v must be finite and >= 0, got {self.v!r}")
        if any(c < 0 for c, _ in self.candidates):
            raise ValueError("candidate costs must be >= 0")


@dataclass
class TrainConfig:
    epsilon: float = 0.1
    lam: float = 1.0
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 64
    rng_seed: int = 0
    hidden_dim: int = 128

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


def loss_reg(model: LearnedModel, tup: RouteTuple) -> float:
    return (model(tup.target_features) - tup.v) ** 2


def loss_con(model: LearnedModel, tup: RouteTuple, j: int, epsilon: float) -> float:
    if not 0 <= j < len(tup.candidates):
        raise IndexError(f"candidate {j} out of range")
    cost, reactants = tup.candidates[j]
    total = sum(model(x) for x in reactants)
    return max(0.0, tup.v + epsilon - cost - total)


@dataclass
class _Packed:
    """A batch of tuples flattened into arrays for one vectorised pass."""

    targets: np.ndarray          # (n, d)
    v: np.ndarray                # (n,)
    reactants: np.ndarray        # (r, d) reactant rows of non-best candidates
    react_cand: np.ndarray       # (r,) candidate index of each reactant row
    cand_tuple: np.ndarray       # (c,) tuple index of each non-best candidate
    cand_cost: np.ndarray        # (c,)
    cand_weight: np.ndarray      # (c,) 1 / number of non-best candidates of its tuple
    d: int = field(default=0)


def pack(tuples: Sequence[RouteTuple], input_dim: int | None = None) -> _Packed:
    if not tuples:
        raise EmptyDataset("no route tuples")
    d = input_dim or len(tuples[0].target_features)
    targets, v = [], []
    reactants, react_cand, cand_tuple, cand_cost, cand_weight = [], [], [], [], []
    for i, t in enumerate(tuples):
        tf = np.asarray(t.target_features, dtype=np.float64)
        if tf.shape != (d,):
            raise DimensionMismatch(f"tuple {i}: target has {tf.shape}, expected ({d},)")
        targets.append(tf)
        v.append(t.v)
        others = [j for j in range(len(t.candidates)) if j != t.best_reaction]
        for j in others:
            cost, rs = t.candidates[j]
            c = len(cand_tuple)
            cand_tuple.append(i)
            cand_cost.append(cost)
            cand_weight.append(1.0 / len(others))
            for x in rs:
                x = np.asarray(x, dtype=np.float64)
                if x.shape != (d,):
                    raise DimensionMismatch(f"tuple {i}: reactant has {x.shape}, expected ({d},)")
                reactants.append(x)
                react_cand.append(c)
    return _Packed(np.array(targets), np.array(v, dtype=np.float64),
                   np.array(reactants).reshape(-1, d), np.array(react_cand, dtype=np.int64),
                   np.array(cand_tuple, dtype=np.int64), np.array(cand_cost, dtype=np.float64),
                   np.array(cand_weight, dtype=np.float64), d)


def objective(model: LearnedModel, batch: _Packed, epsilon: float, lam: float,
              with_grad: bool = True):
    """Mean objective over the batch and (optionally) its flat parameter gradient."""
    n = len(batch.v)
    x = np.vstack([batch.targets, batch.reactants])
    pred, cache = model.forward(x)
    v_t, v_r = pred[:n], pred[n:]
    n_cand = len(batch.cand_tuple)
    sum_v = np.bincount(batch.react_cand, weights=v_r, minlength=n_cand) if n_cand else np.zeros(0)
    arg = batch.v[batch.cand_tuple] + epsilon - batch.cand_cost - sum_v
    active = arg > 0
    hinge = np.where(active, arg, 0.0)
    con = np.bincount(batch.cand_tuple, weights=hinge * batch.cand_weight, minlength=n) if n_cand \
        else np.zeros(n)
    reg = (v_t - batch.v) ** 2
    value = float(np.mean(reg + lam * con))
    if not with_grad:
        return value, None
    g_t = 2.0 * (v_t - batch.v) / n
    g_cand = -lam * batch.cand_weight * active / n
    g_r = g_cand[batch.react_cand] if len(v_r) else np.zeros(0)
    grads = model.backward(cache, np.concatenate([g_t, g_r]))
    return value, model.flatten_grads(grads)


def _subset(p: _Packed, idx: np.ndarray) -> _Packed:
    remap = -np.ones(len(p.v), dtype=np.int64)
    remap[idx] = np.arange(len(idx))
    cmask = remap[p.cand_tuple] >= 0
    cand_ids = np.flatnonzero(cmask)
    cremap = -np.ones(len(p.cand_tuple), dtype=np.int64)
    cremap[cand_ids] = np.arange(len(cand_ids))
    rmask = cmask[p.react_cand] if len(p.react_cand) else np.zeros(0, dtype=bool)
    return _Packed(p.targets[idx], p.v[idx], p.reactants[rmask], cremap[p.react_cand[rmask]],
                   remap[p.cand_tuple[cmask]], p.cand_cost[cmask], p.cand_weight[cmask], p.d)


def train(dataset: Sequence[RouteTuple], config: TrainConfig = TrainConfig(),
          model: LearnedModel | None = None) -> LearnedModel:
    """Fit a value model; ``model.history`` holds the full-data objective per epoch."""
    if not dataset:
        raise EmptyDataset("cannot train on an empty dataset")
    packed = pack(dataset)
    if model is None:
        mean_v = float(np.mean(packed.v))
        # start the output near the mean target: inverse softplus
        bias = math.log(math.expm1(mean_v)) if mean_v > 1e-6 else -5.0
        model = LearnedModel.init(packed.d, config.hidden_dim, config.rng_seed, output_bias=bias)
    elif model.input_dim != packed.d:
        raise DimensionMismatch(f"model expects {model.input_dim} features, data has {packed.d}")
    rng = np.random.default_rng(config.rng_seed)
    n = len(packed.v)
    params = model.get_params()
    history = [objective(model, packed, config.epsilon, config.lam, with_grad=False)[0]]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = _subset(packed, np.sort(order[start:start + config.batch_size]))
            _, grad = objective(model, batch, config.epsilon, config.lam)
            params -= config.learning_rate * grad
            model.set_params(params)
        history.append(objective(model, packed, config.epsilon, config.lam, with_grad=False)[0])
    model.history = history
    return model


def mean_losses(model: LearnedModel, dataset: Sequence[RouteTuple], epsilon: float) -> tuple[float, float]:
    """Mean regression loss and mean per-tuple consistency loss."""
    p = pack(dataset)
    reg_plus = objective(model, p, epsilon, 0.0, with_grad=False)[0]
    both = objective(model, p, epsilon, 1.0, with_grad=False)[0]
    return reg_plus, both - reg_plus
