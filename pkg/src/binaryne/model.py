"""BinaryNE parameters and training.

The hidden layer of node ``i`` is ``tanh(beta * W_in[i])``; it predicts context
nodes through ``W_out_s`` and attributes through ``W_out_a``, each trained by
negative-sampled logistic loss. ``beta`` grows over training so the hidden
layer approaches the sign function used to emit binary codes.

Output matrices are held node/attribute-major (``out_s[j]`` is column ``j`` of
``W_out_s``) so each SGD step touches contiguous rows.
"""
from __future__ import annotations

import logging
import math
import struct
import time
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import njit, prange

from . import sampler
from ._jit import alias_draw, below, new_stream, uniform
from .graph import AttributeMatrix, Graph
from .walks import PairCounts

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"BNEP"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIQQI")

STRUCTURE, ATTRIBUTE = 0, 1
_TRAIN_STREAM = 0x7472616E


@dataclass(eq=False)
class ModelParams:
    W_in: np.ndarray
    out_s: np.ndarray
    out_a: np.ndarray

    @property
    def d(self) -> int:
        return self.W_in.shape[1]

    @property
    def node_count(self) -> int:
        return self.W_in.shape[0]

    @property
    def attr_count(self) -> int:
        return self.out_a.shape[0]

    @property
    def W_out_s(self) -> np.ndarray:
        """d x |V| view."""
        return self.out_s.T

    @property
    def W_out_a(self) -> np.ndarray:
        """d x |A| view."""
        return self.out_a.T

    def copy(self) -> "ModelParams":
        return ModelParams(self.W_in.copy(), self.out_s.copy(), self.out_a.copy())

    def identical(self, other: "ModelParams") -> bool:
        return all(a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
                   for a, b in zip(self._arrays(), other._arrays()))

    def _arrays(self):
        return self.W_in, self.out_s, self.out_a

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self._arrays())


def init_params(v_count: int, a_count: int, d: int, seed: int = 0, dtype=np.float32) -> ModelParams:
    """W_in ~ U[-0.5/d, 0.5/d]; both output matrices zero."""
    if d < 1:
        raise ValueError("embedding dimension must be >= 1")
    rng = np.random.default_rng(seed)
    W_in = rng.uniform(-0.5 / d, 0.5 / d, size=(v_count, d)).astype(dtype)
    return ModelParams(
        W_in=W_in,
        out_s=np.zeros((v_count, d), dtype=dtype),
        out_a=np.zeros((a_count, d), dtype=dtype),
    )


def default_iterations(node_count: int) -> int:
    if node_count < 5000:
        return 100_000_000
    if node_count < 1_000_000:
        return 200_000_000
    return 1_000_000_000


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 100_000_000
    negatives: int = 5
    eta_start: float = 0.025
    eta_end: float = 2.5e-6
    beta_start: float = 0.01
    beta_end: float = 1.0
    seed: int = 0
    switch_prob: float = 0.5
    noise_power: float = sampler.DEFAULT_NOISE_POWER
    grad_clip: float | None = None
    log_every: int = 1_000_000
    threads: int = 1

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if not self.eta_start >= self.eta_end > 0:
            raise ValueError("need eta_start >= eta_end > 0")
        if not self.beta_end >= self.beta_start > 0:
            raise ValueError("need beta_end >= beta_start > 0")
        if not 0.0 <= self.switch_prob <= 1.0:
            raise ValueError("switch_prob must lie in [0, 1]")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@njit(inline="always", cache=True)
def _schedule(it, max_iters, eta_start, eta_end, beta_start, beta_end):
    if max_iters <= 0:
        return eta_start, beta_start
    frac = min(it / max_iters, 1.0)
    eta = eta_start + (eta_end - eta_start) * frac
    beta = beta_start * (beta_end / beta_start) ** frac
    return eta, beta


def schedule(cfg: TrainConfig, it: int) -> tuple[float, float]:
    """(eta, beta) at iteration ``it``: eta linear, beta geometric between the endpoints."""
    if not 0 <= it <= max(cfg.max_iters, 0):
        raise ValueError(f"iteration {it} outside [0, {cfg.max_iters}]")
    if it == cfg.max_iters and cfg.max_iters > 0:
        return cfg.eta_end, cfg.beta_end
    return _schedule(it, cfg.max_iters, cfg.eta_start, cfg.eta_end, cfg.beta_start, cfg.beta_end)


def hidden_repr(params: ModelParams, node: int, beta: float) -> np.ndarray:
    if beta <= 0:
        raise ValueError("beta must be positive")
    return np.tanh(beta * params.W_in[node].astype(np.float64))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _partial_loss(params, out, node, target, negatives, beta):
    phi = hidden_repr(params, node, beta)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(-1)
    pos = phi @ out[target].astype(np.float64)
    neg = out[negatives].astype(np.float64) @ phi
    return float(-_log_sigmoid(pos) - _log_sigmoid(-neg).sum())


def structure_loss(params: ModelParams, pair, negatives, beta: float) -> float:
    i, j = pair
    return _partial_loss(params, params.out_s, i, j, negatives, beta)


def attribute_loss(params: ModelParams, pair, negatives, beta: float) -> float:
    i, a = pair
    return _partial_loss(params, params.out_a, i, a, negatives, beta)


# -- the update kernel shared by single steps and the training loop ---------


@njit(inline="always", cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(inline="always", cache=True)
def _tanh(x):
    # expm1 keeps full relative accuracy near zero, where most early-training inputs live
    if x > 20.0:
        return 1.0
    if x < -20.0:
        return -1.0
    t = math.expm1(2.0 * x)
    return t / (t + 2.0)


@njit(inline="always", cache=True)
def _softplus(x):
    # -log sigmoid(-x)
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@njit(cache=True, fastmath={"reassoc", "nsz", "contract", "arcp"})
def _gradients(W_in, out, node, targets, ntargets, beta, phi, gcoef, grad_in):
    """Fill phi, per-target score gradients and dO/dW_in[node]; return the loss.

    ``targets[0]`` is the positive; ``targets[1:ntargets]`` the negatives. All
    quantities use pre-update parameters.
    """
    d = W_in.shape[1]
    for r in range(d):
        phi[r] = _tanh(beta * np.float64(W_in[node, r]))
        grad_in[r] = 0.0
    loss = 0.0
    for m in range(ntargets):
        col = targets[m]
        s = 0.0
        for r in range(d):
            s += phi[r] * out[col, r]
        if m == 0:
            gcoef[m] = _sigmoid(s) - 1.0
            loss += _softplus(-s)
        else:
            gcoef[m] = _sigmoid(s)
            loss += _softplus(s)
        for r in range(d):
            grad_in[r] += gcoef[m] * out[col, r]
    for r in range(d):
        grad_in[r] *= beta * (1.0 - phi[r] * phi[r])
    return loss


@njit(cache=True, fastmath={"reassoc", "nsz", "contract", "arcp"})
def _apply(W_in, out, node, targets, ntargets, eta, phi, gcoef, grad_in, clip):
    d = W_in.shape[1]
    finite = True
    for m in range(ntargets):
        col = targets[m]
        for r in range(d):
            out[col, r] -= eta * gcoef[m] * phi[r]
    for r in range(d):
        g = grad_in[r]
        if clip > 0.0:
            g = min(max(g, -clip), clip)
        if not math.isfinite(g):
            finite = False
        W_in[node, r] -= eta * g
    return finite


def _targets(positive, negatives):
    return np.concatenate([[positive], np.asarray(negatives, dtype=np.int64).reshape(-1)]).astype(np.int64)


def _gradient_arrays(params, out, node, positive, negatives, beta):
    targets = _targets(positive, negatives)
    d = params.d
    phi, grad_in = np.empty(d), np.empty(d)
    gcoef = np.empty(targets.size)
    loss = _gradients(params.W_in, out, node, targets, targets.size, beta, phi, gcoef, grad_in)
    return targets, phi, gcoef, grad_in, loss


@dataclass
class Gradients:
    """Analytic partial derivatives of one negative-sampled objective."""

    node: int
    targets: np.ndarray
    W_in_row: np.ndarray
    columns: np.ndarray  # (1 + K) x d; row m is d O / d out[targets[m]]
    loss: float

    def column_total(self) -> dict[int, np.ndarray]:
        """Gradient per distinct output column (duplicate negatives summed)."""
        acc: dict[int, np.ndarray] = {}
        for t, g in zip(self.targets, self.columns):
            acc[int(t)] = acc.get(int(t), 0.0) + g
        return acc


def _grads(params, out, pair, negatives, beta):
    node, positive = pair
    targets, phi, gcoef, grad_in, loss = _gradient_arrays(params, out, node, positive, negatives, beta)
    return Gradients(node=node, targets=targets, W_in_row=grad_in.copy(),
                     columns=gcoef[:, None] * phi[None, :], loss=loss)


def structure_gradients(params: ModelParams, pair, negatives, beta: float) -> Gradients:
    return _grads(params, params.out_s, pair, negatives, beta)


def attribute_gradients(params: ModelParams, pair, negatives, beta: float) -> Gradients:
    return _grads(params, params.out_a, pair, negatives, beta)


def _step(params, out, pair, negatives, eta, beta, clip):
    if eta < 0:
        raise ValueError("eta must be non-negative")
    node, positive = pair
    targets, phi, gcoef, grad_in, _ = _gradient_arrays(params, out, node, positive, negatives, beta)
    if not _apply(params.W_in, out, node, targets, targets.size, eta, phi, gcoef, grad_in,
                  0.0 if clip is None else clip):
        raise FloatingPointError(f"non-finite gradient at node {node}, targets {targets.tolist()}, beta {beta}")
    return params


def sgd_step_structure(params: ModelParams, pair, negatives, eta: float, beta: float,
                       clip: float | None = None) -> ModelParams:
    """In-place SGD step on the structure objective for context pair ``pair``."""
    return _step(params, params.out_s, pair, negatives, eta, beta, clip)


def sgd_step_attribute(params: ModelParams, pair, negatives, eta: float, beta: float,
                       clip: float | None = None) -> ModelParams:
    """In-place SGD step on the attribute objective for (node, attribute) ``pair``."""
    return _step(params, params.out_a, pair, negatives, eta, beta, clip)


# -- training loop -----------------------------------------------------------


def _resolve_slots(table: sampler.AliasTable, first, second) -> np.ndarray:
    """Per alias slot k: (first, second) of category k, then of its alias.

    One draw then reads a single row instead of chasing the alias index into
    two more arrays; with millions of pairs those are all cache misses.
    """
    first = np.asarray(first, dtype=np.int32)
    second = np.asarray(second, dtype=np.int32)
    return np.ascontiguousarray(np.column_stack([first, second, first[table.alias], second[table.alias]]))


@njit(inline="always", cache=True)
def _draw_resolved(prob, ends, state):
    # same stream usage as alias_draw: slot first, then the coin
    k = below(state, prob.size)
    if uniform(state) < prob[k]:
        return ends[k, 0], ends[k, 1]
    return ends[k, 2], ends[k, 3]


@njit(cache=True)
def _draw_target_set(targets, positive, K, noise_prob, noise_alias, state):
    targets[0] = positive
    for m in range(1, K + 1):
        k = alias_draw(noise_prob, noise_alias, state)
        while k == positive:
            k = alias_draw(noise_prob, noise_alias, state)
        targets[m] = k


@njit(cache=True)
def _train_range(W_in, out_s, out_a,
                 pair_prob, pair_ends, attr_prob, attr_ends,
                 vnoise_prob, vnoise_alias, anoise_prob, anoise_alias,
                 K, it_lo, it_hi, max_iters, eta0, eta1, beta0, beta1,
                 switch_prob, use_attrs, clip, state, stats):
    """Run iterations [it_lo, it_hi). stats = [n_s, loss_s, n_a, loss_a, bad_iter]."""
    d = W_in.shape[1]
    phi = np.empty(d)
    grad_in = np.empty(d)
    gcoef = np.empty(K + 1)
    targets = np.empty(K + 1, dtype=np.int64)
    for it in range(it_lo, it_hi):
        eta, beta = _schedule(it, max_iters, eta0, eta1, beta0, beta1)
        delta = uniform(state)
        if delta <= switch_prob or not use_attrs:
            node, positive = _draw_resolved(pair_prob, pair_ends, state)
            _draw_target_set(targets, positive, K, vnoise_prob, vnoise_alias, state)
            loss = _gradients(W_in, out_s, node, targets, K + 1, beta, phi, gcoef, grad_in)
            ok = _apply(W_in, out_s, node, targets, K + 1, eta, phi, gcoef, grad_in, clip)
            stats[0] += 1.0
            stats[1] += loss
        else:
            node, positive = _draw_resolved(attr_prob, attr_ends, state)
            _draw_target_set(targets, positive, K, anoise_prob, anoise_alias, state)
            loss = _gradients(W_in, out_a, node, targets, K + 1, beta, phi, gcoef, grad_in)
            ok = _apply(W_in, out_a, node, targets, K + 1, eta, phi, gcoef, grad_in, clip)
            stats[2] += 1.0
            stats[3] += loss
        if not ok:
            stats[4] = it
            return False
    return True


@njit(parallel=True, cache=True)
def _train_hogwild(W_in, out_s, out_a,
                   pair_prob, pair_ends, attr_prob, attr_ends,
                   vnoise_prob, vnoise_alias, anoise_prob, anoise_alias,
                   K, it_lo, it_hi, max_iters, eta0, eta1, beta0, beta1,
                   switch_prob, use_attrs, clip, seed, workers, stats):
    span = it_hi - it_lo
    ok = np.ones(workers, dtype=np.bool_)
    for w in prange(workers):
        lo = it_lo + span * w // workers
        hi = it_lo + span * (w + 1) // workers
        state = new_stream(seed, _TRAIN_STREAM, it_lo * workers + w + 1)
        ok[w] = _train_range(W_in, out_s, out_a, pair_prob, pair_ends, attr_prob, attr_ends,
                             vnoise_prob, vnoise_alias, anoise_prob, anoise_alias,
                             K, lo, hi, max_iters, eta0, eta1, beta0, beta1,
                             switch_prob, use_attrs, clip, state, stats[w])
    return ok.all()


@dataclass
class TrainHistory:
    """Per-branch iteration counts and the loss trace logged during training."""

    structure_steps: int = 0
    attribute_steps: int = 0
    records: list[dict] = field(default_factory=list)
    alpha1: float = float("nan")
    alpha2: float = float("nan")
    seconds: float = 0.0


def train(graph: Graph, counts: PairCounts, attrs: AttributeMatrix | None, cfg: TrainConfig,
          d: int = 128, history: TrainHistory | None = None, params: ModelParams | None = None) -> ModelParams:
    """Run ``cfg.max_iters`` SGD iterations and return the trained parameters.

    Each iteration draws delta ~ U(0,1); delta <= switch_prob takes the structure
    branch, otherwise the attribute branch (always structure when X is empty).
    """
    if counts.size == 0:
        raise ValueError("pair counts are empty; nothing to train on")
    if attrs is None:
        attrs = AttributeMatrix.empty(graph.node_count)
    if counts.node_count != graph.node_count or attrs.node_count != graph.node_count:
        raise ValueError("graph, pair counts and attribute matrix disagree on node count")
    history = history if history is not None else TrainHistory()
    if params is None:
        params = init_params(graph.node_count, attrs.attr_count, d, cfg.seed)
    use_attrs = attrs.nnz > 0

    K = cfg.negatives
    pairs = sampler.pair_table(counts)
    vnoise = sampler.node_noise(counts, cfg.noise_power)
    if K > 0 and vnoise.sampleable < 2:
        raise ValueError("node noise distribution needs at least two sampleable nodes")
    if use_attrs:
        attr_tab = sampler.attribute_table(attrs)
        anoise = sampler.attribute_noise(attrs, cfg.noise_power)
        if K > 0 and anoise.sampleable < 2:
            raise ValueError("attribute noise distribution needs at least two sampleable attributes")
        attr_node, attr_index, _ = attrs.triplets()
    else:
        attr_tab = anoise_tab = sampler.AliasTable(np.ones(1), np.zeros(1, dtype=np.int64))
        anoise = sampler.NoiseDistribution(anoise_tab, cfg.noise_power, np.ones(1))
        attr_node = attr_index = np.zeros(1, dtype=np.int64)

    history.alpha1 = 1.0 / counts.total
    history.alpha2 = 1.0 / attrs.total if use_attrs else float("nan")
    tables = (pairs.prob, _resolve_slots(pairs, counts.centers, counts.contexts),
              attr_tab.prob, _resolve_slots(attr_tab, attr_node, attr_index),
              vnoise.table.prob, vnoise.table.alias, anoise.table.prob, anoise.table.alias)
    clip = 0.0 if cfg.grad_clip is None else float(cfg.grad_clip)
    seed = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)
    state = new_stream(seed, _TRAIN_STREAM, 0)
    workers = cfg.threads
    if workers > 1:
        numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
        log.warning("asynchronous training with %d workers: results are not deterministic", workers)

    started = time.perf_counter()
    step = max(1, cfg.log_every)
    for lo in range(0, cfg.max_iters, step):
        hi = min(lo + step, cfg.max_iters)
        args = (params.W_in, params.out_s, params.out_a) + tables + (
            K, lo, hi, cfg.max_iters, cfg.eta_start, cfg.eta_end, cfg.beta_start, cfg.beta_end,
            cfg.switch_prob, use_attrs, clip)
        if workers == 1:
            stats = np.zeros(5)
            stats[4] = -1
            ok = _train_range(*args, state, stats)
        else:
            per = np.zeros((workers, 5))
            per[:, 4] = -1
            ok = _train_hogwild(*args, seed, workers, per)
            stats = per.sum(axis=0)
            stats[4] = per[:, 4].max()
        if not ok:
            raise FloatingPointError(
                f"non-finite gradient at iteration {int(stats[4])} "
                f"(eta={schedule(cfg, int(stats[4]))[0]:.3g}, beta={schedule(cfg, int(stats[4]))[1]:.3g})")
        ns, na = int(stats[0]), int(stats[2])
        history.structure_steps += ns
        history.attribute_steps += na
        eta, beta = schedule(cfg, hi)
        record = {
            "iter": hi, "eta": eta, "beta": beta,
            "loss_structure": stats[1] / ns if ns else float("nan"),
            "loss_attribute": stats[3] / na if na else float("nan"),
        }
        history.records.append(record)
        log.info("iter %d eta %.3g beta %.3g loss_s %.4f loss_a %.4f", hi, eta, beta,
                 record["loss_structure"], record["loss_attribute"])
    history.seconds = time.perf_counter() - started
    log.info("trained %d iterations in %.1fs (structure %d, attribute %d)", cfg.max_iters,
             history.seconds, history.structure_steps, history.attribute_steps)
    if not params.all_finite():
        raise FloatingPointError("training produced non-finite parameters")
    return params


# -- checkpoint --------------------------------------------------------------


def save_checkpoint(params: ModelParams, path) -> None:
    header = _CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, params.node_count,
                               params.attr_count, params.d)
    with open(path, "wb") as fh:
        fh.write(header)
        for mat in (params.W_in, params.W_out_s, params.W_out_a):
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CKPT_HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, nv, na, d = _CKPT_HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    sizes = (nv * d, d * nv, d * na)
    if len(raw) != _CKPT_HEADER.size + 4 * sum(sizes):
        raise ValueError(f"{path}: payload size does not match header dimensions")
    offset = _CKPT_HEADER.size
    mats = []
    for size in sizes:
        mats.append(np.frombuffer(raw, dtype="<f4", count=size, offset=offset).astype(np.float32))
        offset += 4 * size
    W_in = mats[0].reshape(nv, d)
    out_s = np.ascontiguousarray(mats[1].reshape(d, nv).T)
    out_a = np.ascontiguousarray(mats[2].reshape(d, na).T)
    return ModelParams(W_in, out_s, out_a)
