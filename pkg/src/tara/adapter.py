"""Projection adapter trained on triplet embeddings with a temperature-scaled
contrastive objective.

The loss for a batch of B triplets (a_i, p_i, n_i) of unit vectors is

    (1/B) sum_i -log( exp(<a_i,p_i>/tau)
                      / sum_j [ exp(<a_i,p_j>/tau) + exp(<a_i,n_j>/tau) ] )

with both denominator sums over the full batch. Gradients are derived by
hand through the projection and the row L2-normalization; storage is
float32 at the matrix boundaries but all training math runs in float64.
"""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass, field

import numpy as np

from tara.composer import TripletDataset
from tara.embeddings import EmbeddingMatrix
from tara.ioutils import write_text_atomic

log = logging.getLogger("tara.adapter")

OPTIMIZERS = ("sgd", "adam")


class TrainError(ValueError):
    pass


@dataclass
class AdapterParams:
    weight: np.ndarray  # dim_in x dim_out
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 2:
            raise TrainError(f"weight must be 2-D, got shape {self.weight.shape}")
        if not np.all(np.isfinite(self.weight)):
            raise TrainError("weight contains non-finite values")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weight.shape[1],):
                raise TrainError(
                    f"bias shape {self.bias.shape} does not match dim_out {self.weight.shape[1]}"
                )
            if not np.all(np.isfinite(self.bias)):
                raise TrainError("bias contains non-finite values")

    @property
    def dim_in(self) -> int:
        return self.weight.shape[0]

    @property
    def dim_out(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> "AdapterParams":
        return AdapterParams(
            weight=self.weight.copy(),
            bias=None if self.bias is None else self.bias.copy(),
        )

    @classmethod
    def identity_init(cls, dim_in: int, dim_out: int | None = None, bias: bool = True):
        """Identity-padded weight: step 0 reproduces the base model's scores."""
        if dim_out is None:
            dim_out = dim_in
        return cls(
            weight=np.eye(dim_in, dim_out, dtype=np.float64),
            bias=np.zeros(dim_out, dtype=np.float64) if bias else None,
        )


@dataclass
class AdapterGrads:
    weight: np.ndarray
    bias: np.ndarray | None

    def norm(self) -> float:
        total = float(np.sum(self.weight ** 2))
        if self.bias is not None:
            total += float(np.sum(self.bias ** 2))
        return float(np.sqrt(total))


@dataclass
class TrainConfig:
    tau: float = 0.05
    lr: float = 1e-3
    batch: int = 256
    epochs: int = 2
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dim_out: int | None = None

    def __post_init__(self):
        if self.tau <= 0:
            raise TrainError(f"tau must be > 0, got {self.tau}")
        if self.lr < 0:
            raise TrainError(f"lr must be >= 0, got {self.lr}")
        if self.batch < 1:
            raise TrainError(f"batch must be >= 1, got {self.batch}")
        if self.epochs < 1:
            raise TrainError(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in OPTIMIZERS:
            raise TrainError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise TrainError("adam betas must be in [0, 1)")
        if self.eps <= 0:
            raise TrainError(f"eps must be > 0, got {self.eps}")

    def to_dict(self) -> dict:
        return {
            "tau": self.tau, "lr": self.lr, "batch": self.batch,
            "epochs": self.epochs, "seed": self.seed, "optimizer": self.optimizer,
            "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "dim_out": self.dim_out,
        }


@dataclass
class TrainHistory:
    step_losses: list[float] = field(default_factory=list)
    epoch_mean_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)


def _as_batch(x, name: str, stage: str = "input") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise TrainError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise TrainError(f"non-finite {stage}: {name} contains NaN or inf")
    return arr


def _project(params: AdapterParams, x: np.ndarray, name: str):
    z = x @ params.weight
    if params.bias is not None:
        z = z + params.bias
    if not np.all(np.isfinite(z)):
        raise TrainError(f"non-finite intermediate at projection of {name}")
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise TrainError(f"non-finite intermediate at normalization of {name}: zero-norm row")
    u = z / norms
    return z, norms, u


def project_and_normalize(params: AdapterParams, x) -> np.ndarray:
    """Rows mapped by the adapter then L2-normalized, in float64."""
    x = _as_batch(x, "x")
    if x.shape[1] != params.dim_in:
        raise TrainError(f"input dim {x.shape[1]} does not match adapter dim_in {params.dim_in}")
    _, _, u = _project(params, x, "x")
    return u


def forward(params: AdapterParams, m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Apply the adapter to an embedding matrix; output rows are unit-norm."""
    if m.dim != params.dim_in:
        raise TrainError(f"input dim {m.dim} does not match adapter dim_in {params.dim_in}")
    u = project_and_normalize(params, m.data.astype(np.float64))
    return EmbeddingMatrix(m.ids, u.astype(np.float32), normalized=True)


def infonce_loss(anchors, positives, negatives, tau: float) -> float:
    """Batch-mean contrastive loss over unit-vector triplets.

    The denominator pools the positives and hard negatives of every batch
    member; computed with max-subtraction so large logits cannot overflow.
    """
    if tau <= 0:
        raise TrainError(f"tau must be > 0, got {tau}")
    a = _as_batch(anchors, "anchors")
    p = _as_batch(positives, "positives")
    n = _as_batch(negatives, "negatives")
    if not (a.shape == p.shape == n.shape):
        raise TrainError(
            f"batch shape mismatch: anchors {a.shape}, positives {p.shape}, negatives {n.shape}"
        )
    sp = (a @ p.T) / tau
    sn = (a @ n.T) / tau
    logits = np.concatenate([sp, sn], axis=1)
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = float(np.mean(lse - np.diag(sp)))
    if not np.isfinite(loss):
        raise TrainError("non-finite loss")
    return loss


def loss_and_grad(params: AdapterParams, batch, tau: float) -> tuple[float, AdapterGrads]:
    """Loss and its gradient w.r.t. the adapter parameters.

    ``batch`` is an (anchors, positives, negatives) tuple of base-embedding
    arrays; each is projected and L2-normalized before the loss.
    """
    if tau <= 0:
        raise TrainError(f"tau must be > 0, got {tau}")
    xa = _as_batch(batch[0], "anchors")
    xp = _as_batch(batch[1], "positives")
    xn = _as_batch(batch[2], "negatives")
    if not (xa.shape == xp.shape == xn.shape):
        raise TrainError("batch arrays must share one shape")
    if xa.shape[0] < 1:
        raise TrainError("batch must be non-empty")
    if xa.shape[1] != params.dim_in:
        raise TrainError(f"input dim {xa.shape[1]} does not match adapter dim_in {params.dim_in}")
    b = xa.shape[0]

    za, na, ua = _project(params, xa, "anchors")
    zp, np_, up = _project(params, xp, "positives")
    zn, nn, un = _project(params, xn, "negatives")

    loss = infonce_loss(ua, up, un, tau)

    sp = (ua @ up.T) / tau
    sn = (ua @ un.T) / tau
    logits = np.concatenate([sp, sn], axis=1)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    probs = e / e.sum(axis=1, keepdims=True)
    pp, pn = probs[:, :b], probs[:, b:]

    scale = 1.0 / (b * tau)
    dua = scale * (-up + pp @ up + pn @ un)
    dup = scale * (-ua + pp.T @ ua)
    dun = scale * (pn.T @ ua)

    def through_norm(du, u, norms):
        return (du - np.sum(du * u, axis=1, keepdims=True) * u) / norms

    dza = through_norm(dua, ua, na)
    dzp = through_norm(dup, up, np_)
    dzn = through_norm(dun, un, nn)

    dw = xa.T @ dza + xp.T @ dzp + xn.T @ dzn
    if not np.all(np.isfinite(dw)):
        raise TrainError("non-finite intermediate at gradient")
    db = None
    if params.bias is not None:
        db = dza.sum(axis=0) + dzp.sum(axis=0) + dzn.sum(axis=0)
    return loss, AdapterGrads(weight=dw, bias=db)


def _loss_only(params: AdapterParams, batch, tau: float) -> float:
    ua = project_and_normalize(params, batch[0])
    up = project_and_normalize(params, batch[1])
    un = project_and_normalize(params, batch[2])
    return infonce_loss(ua, up, un, tau)


def grad_check(params: AdapterParams, batch, tau: float, h: float = 1e-4) -> float:
    """Max relative error between the analytic gradient and central finite
    differences of the loss at step ``h``, over every parameter entry."""
    if h <= 0:
        raise TrainError(f"h must be > 0, got {h}")
    _, grads = loss_and_grad(params, batch, tau)
    worst = 0.0

    def probe(array: np.ndarray, analytic: np.ndarray):
        nonlocal worst
        flat = array.reshape(-1)
        ga = analytic.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            hi = _loss_only(params, batch, tau)
            flat[k] = orig - h
            lo = _loss_only(params, batch, tau)
            flat[k] = orig
            numeric = (hi - lo) / (2 * h)
            denom = max(1e-12, abs(ga[k]) + abs(numeric))
            worst = max(worst, abs(ga[k] - numeric) / denom)

    probe(params.weight, grads.weight)
    if params.bias is not None:
        probe(params.bias, grads.bias)
    return worst


def _fisher_yates(n: int, rng: random.Random) -> list[int]:
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.randrange(i + 1)
        order[i], order[j] = order[j], order[i]
    return order


class _Optimizer:
    def __init__(self, config: TrainConfig, params: AdapterParams):
        self.config = config
        self.t = 0
        if config.optimizer == "adam":
            self.mw = np.zeros_like(params.weight)
            self.vw = np.zeros_like(params.weight)
            if params.bias is not None:
                self.mb = np.zeros_like(params.bias)
                self.vb = np.zeros_like(params.bias)

    def step(self, params: AdapterParams, grads: AdapterGrads) -> None:
        cfg = self.config
        if cfg.optimizer == "sgd":
            params.weight -= cfg.lr * grads.weight
            if params.bias is not None and grads.bias is not None:
                params.bias -= cfg.lr * grads.bias
            return
        self.t += 1
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t

        def adam(theta, g, m, v):
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            theta -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)

        adam(params.weight, grads.weight, self.mw, self.vw)
        if params.bias is not None and grads.bias is not None:
            adam(params.bias, grads.bias, self.mb, self.vb)


def train_arrays(
    anchors: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    config: TrainConfig,
) -> tuple[AdapterParams, TrainHistory]:
    """Train from pre-stacked triplet arrays; deterministic given the seed."""
    xa = _as_batch(anchors, "anchors")
    xp = _as_batch(positives, "positives")
    xn = _as_batch(negatives, "negatives")
    if not (xa.shape == xp.shape == xn.shape):
        raise TrainError("triplet arrays must share one shape")
    n, dim_in = xa.shape
    if n == 0:
        raise TrainError("cannot train on an empty dataset")
    params = AdapterParams.identity_init(dim_in, config.dim_out)
    optimizer = _Optimizer(config, params)
    rng = random.Random(config.seed)
    history = TrainHistory()
    for _epoch in range(config.epochs):
        started = time.perf_counter()
        order = _fisher_yates(n, rng)
        epoch_losses = []
        for lo in range(0, n, config.batch):
            idx = order[lo:lo + config.batch]
            loss, grads = loss_and_grad(
                params, (xa[idx], xp[idx], xn[idx]), config.tau
            )
            optimizer.step(params, grads)
            history.step_losses.append(loss)
            epoch_losses.append(loss)
        history.epoch_mean_losses.append(float(np.mean(epoch_losses)))
        history.epoch_seconds.append(time.perf_counter() - started)
    return params, history


def train(
    dataset: TripletDataset,
    base,
    config: TrainConfig,
) -> tuple[AdapterParams, TrainHistory]:
    """Train the adapter on a composed dataset.

    ``base`` maps each dataset sentence to its base embedding; an
    EmbeddingMatrix keyed by sentence works directly.
    """
    if isinstance(base, EmbeddingMatrix):
        contains, fetch = base.__contains__, base.row
    else:
        contains, fetch = base.__contains__, base.__getitem__

    def rows(sentences):
        out = []
        for s in sentences:
            if not contains(s):
                raise TrainError(f"missing base embedding for sentence {s!r}")
            out.append(np.asarray(fetch(s), dtype=np.float64))
        return np.stack(out)

    xa = rows([t.anchor for t in dataset.triplets])
    xp = rows([t.positive for t in dataset.triplets])
    xn = rows([t.negative for t in dataset.triplets])
    return train_arrays(xa, xp, xn, config)


def save_adapter(
    params: AdapterParams,
    path: str,
    config: TrainConfig | None = None,
    seed: int | None = None,
) -> None:
    doc = {
        "dim_in": params.dim_in,
        "dim_out": params.dim_out,
        "weight": [float(v) for v in params.weight.reshape(-1)],
        "bias": None if params.bias is None else [float(v) for v in params.bias],
        "config": None if config is None else config.to_dict(),
        "seed": seed,
    }
    write_text_atomic(path, json.dumps(doc) + "\n")


def load_adapter(path: str) -> tuple[AdapterParams, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    weight = np.asarray(doc["weight"], dtype=np.float64).reshape(
        doc["dim_in"], doc["dim_out"]
    )
    bias = None if doc.get("bias") is None else np.asarray(doc["bias"], dtype=np.float64)
    meta = {"config": doc.get("config"), "seed": doc.get("seed")}
    return AdapterParams(weight=weight, bias=bias), meta
