"""From-scratch bidirectional LSTM with exact backpropagation through time.

The model reads a (72, 9) matrix in both time directions, combines the two
terminal hidden states through an affine head, and squashes with the
logistic function into a score in (0, 1). All arithmetic is float64 numpy;
no autodiff anywhere, gradients are derived by hand and checked against
finite differences in the test suite.

Gate layout: the four gates are stacked along a 4H axis in the order
[input, forget, output, candidate]. The first 3H rows get the logistic
function, the last H rows get tanh. Cell recurrences:

    i = sigma(W_i x + U_i h + b_i)      f = sigma(W_f x + U_f h + b_f)
    o = sigma(W_o x + U_o h + b_o)      g = tanh (W_g x + U_g h + b_g)
    c = f * c_prev + i * g              h = o * tanh(c)

Batched entry points take (B, T, n) arrays; the per-example API wraps a
batch of one. Initial hidden and cell states are zero.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import CheckpointError, ContractViolationError, ShapeError

N_INPUTS = 9

# scores stay strictly inside (0, 1) even when the logistic saturates
_SCORE_LO = float(np.nextafter(0.0, 1.0))
_SCORE_HI = float(np.nextafter(1.0, 0.0))

CHECKPOINT_MAGIC = b"#hemocult-model v1\n"
_BLOCK_NAMES = ("fwd_W", "fwd_U", "fwd_b", "bwd_W", "bwd_U", "bwd_b", "head_w", "head_b")


@dataclass
class CellParams:
    """One direction's weights: gates stacked along the leading 4H axis."""

    W: np.ndarray  # (4H, n_inputs)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    def validate(self):
        H = self.U.shape[1] if self.U.ndim == 2 else -1
        if H < 1 or self.U.shape != (4 * H, H):
            raise ShapeError(f"recurrent weights have shape {self.U.shape}, want (4H, H)")
        if self.W.ndim != 2 or self.W.shape[0] != 4 * H:
            raise ShapeError(f"input weights have shape {self.W.shape}, want (4*{H}, n_in)")
        if self.b.shape != (4 * H,):
            raise ShapeError(f"bias has shape {self.b.shape}, want ({4 * H},)")
        for arr in (self.W, self.U, self.b):
            if not np.all(np.isfinite(arr)):
                raise ShapeError("non-finite cell parameter")

    def copy(self) -> "CellParams":
        return CellParams(self.W.copy(), self.U.copy(), self.b.copy())


@dataclass
class ModelParams:
    """All weights of the bidirectional model plus the scalar output head."""

    fwd: CellParams
    bwd: CellParams
    head_w: np.ndarray  # (2H,) applied to [h_fwd_last; h_bwd_last]
    head_b: np.ndarray  # (1,)

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden

    def validate(self):
        self.fwd.validate()
        self.bwd.validate()
        H = self.fwd.hidden
        if self.bwd.hidden != H:
            raise ShapeError("forward/backward hidden sizes differ")
        if self.head_w.shape != (2 * H,):
            raise ShapeError(f"head weights have shape {self.head_w.shape}, want ({2 * H},)")
        if self.head_b.shape != (1,):
            raise ShapeError(f"head bias has shape {self.head_b.shape}, want (1,)")
        if not (np.all(np.isfinite(self.head_w)) and np.all(np.isfinite(self.head_b))):
            raise ShapeError("non-finite head parameter")

    def copy(self) -> "ModelParams":
        return ModelParams(self.fwd.copy(), self.bwd.copy(), self.head_w.copy(), self.head_b.copy())

    def named_arrays(self):
        """Fixed (name, array) order shared by checkpoints and flatteners."""
        return (
            ("fwd_W", self.fwd.W), ("fwd_U", self.fwd.U), ("fwd_b", self.fwd.b),
            ("bwd_W", self.bwd.W), ("bwd_U", self.bwd.U), ("bwd_b", self.bwd.b),
            ("head_w", self.head_w), ("head_b", self.head_b),
        )


# gradients share the parameter containers; entries are d loss / d parameter
Gradients = ModelParams


def zeros_like_params(p: ModelParams) -> Gradients:
    return ModelParams(
        CellParams(np.zeros_like(p.fwd.W), np.zeros_like(p.fwd.U), np.zeros_like(p.fwd.b)),
        CellParams(np.zeros_like(p.bwd.W), np.zeros_like(p.bwd.U), np.zeros_like(p.bwd.b)),
        np.zeros_like(p.head_w),
        np.zeros_like(p.head_b),
    )


def init_params(hidden_size: int, seed, n_inputs: int = N_INPUTS) -> ModelParams:
    """Uniform [-1/sqrt(H), 1/sqrt(H)] weights, zero biases, forget bias +1."""
    if hidden_size < 1:
        raise ShapeError(f"hidden_size must be >= 1, got {hidden_size}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    H = hidden_size
    scale = 1.0 / np.sqrt(H)

    def cell():
        W = rng.uniform(-scale, scale, size=(4 * H, n_inputs))
        U = rng.uniform(-scale, scale, size=(4 * H, H))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        return CellParams(W, U, b)

    fwd = cell()
    bwd = cell()
    head_w = rng.uniform(-scale, scale, size=2 * H)
    head_b = np.zeros(1)
    return ModelParams(fwd, bwd, head_w, head_b)


def cell_step(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: CellParams):
    """One LSTM step for a single example. Returns (h, c)."""
    H = p.hidden
    x_t = np.asarray(x_t, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    if x_t.shape != (p.W.shape[1],):
        raise ShapeError(f"input has shape {x_t.shape}, want ({p.W.shape[1]},)")
    if h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeError(f"state has shape {h_prev.shape}/{c_prev.shape}, want ({H},)")
    p.validate()
    z = p.W @ x_t + p.U @ h_prev + p.b
    i = expit(z[:H])
    f = expit(z[H:2 * H])
    o = expit(z[2 * H:3 * H])
    g = np.tanh(z[3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def _run_direction(X: np.ndarray, p: CellParams):
    """Unroll one direction over X of shape (B, T, n_in); cache all intermediates."""
    B, T, n_in = X.shape
    H = p.hidden
    Zx = X.reshape(B * T, n_in) @ p.W.T
    Zx += p.b
    Zx = Zx.reshape(B, T, 4 * H)
    A = np.empty((T, B, 4 * H))
    C = np.empty((T, B, H))
    TC = np.empty((T, B, H))
    Hs = np.zeros((T + 1, B, H))
    c = np.zeros((B, H))
    h = Hs[0]
    for t in range(T):
        z = Zx[:, t, :] + h @ p.U.T
        a = A[t]
        a[:, :3 * H] = expit(z[:, :3 * H])
        a[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        i = a[:, :H]
        f = a[:, H:2 * H]
        o = a[:, 2 * H:3 * H]
        g = a[:, 3 * H:]
        c = f * c + i * g
        C[t] = c
        np.tanh(c, out=TC[t])
        np.multiply(o, TC[t], out=Hs[t + 1])
        h = Hs[t + 1]
    return {"A": A, "C": C, "TC": TC, "Hs": Hs}


def _direction_backward(X: np.ndarray, p: CellParams, cache: dict, dh_last: np.ndarray):
    """Exact BPTT through one direction; returns (dW, dU, db)."""
    B, T, n_in = X.shape
    H = p.hidden
    A, C, TC, Hs = cache["A"], cache["C"], cache["TC"], cache["Hs"]
    dZ = np.empty((T, B, 4 * H))
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        a = A[t]
        i = a[:, :H]
        f = a[:, H:2 * H]
        o = a[:, 2 * H:3 * H]
        g = a[:, 3 * H:]
        tc = TC[t]
        do = dh * tc
        dc += dh * o * (1.0 - tc * tc)
        dz = dZ[t]
        np.multiply(dc * g, i * (1.0 - i), out=dz[:, :H])
        if t > 0:
            np.multiply(dc * C[t - 1], f * (1.0 - f), out=dz[:, H:2 * H])
        else:
            dz[:, H:2 * H] = 0.0  # c_prev is the zero initial state
        np.multiply(do, o * (1.0 - o), out=dz[:, 2 * H:3 * H])
        np.multiply(dc * i, 1.0 - g * g, out=dz[:, 3 * H:])
        dh = dz @ p.U
        dc *= f
    flatZ = dZ.transpose(1, 0, 2).reshape(B * T, 4 * H)
    dW = flatZ.T @ X.reshape(B * T, n_in)
    dU = dZ.reshape(T * B, 4 * H).T @ Hs[:-1].reshape(T * B, H)
    db = dZ.sum(axis=(0, 1))
    return dW, dU, db


def forward_batch(X: np.ndarray, p: ModelParams):
    """Score a batch. X has shape (B, T, n_in). Returns (scores (B,), cache)."""
    p.validate()
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[2] != p.fwd.W.shape[1]:
        raise ShapeError(f"batch has shape {X.shape}, want (B, T, {p.fwd.W.shape[1]})")
    H = p.hidden_size
    Xr = np.ascontiguousarray(X[:, ::-1, :])
    cf = _run_direction(X, p.fwd)
    cb = _run_direction(Xr, p.bwd)
    hf = cf["Hs"][-1]
    hb = cb["Hs"][-1]
    # two separate dot products so direction swap commutes bit-exactly
    u = hf @ p.head_w[:H] + hb @ p.head_w[H:] + p.head_b[0]
    s = np.clip(expit(u), _SCORE_LO, _SCORE_HI)
    cache = {"X": X, "Xr": Xr, "params": p, "fwd": cf, "bwd": cb, "hf": hf, "hb": hb, "scores": s}
    return s, cache


def backward_batch(X: np.ndarray, labels: np.ndarray, p: ModelParams,
                   w_pos: float, w_neg: float, cache: dict):
    """Sum-over-batch weighted MSE and its exact gradients.

    The cache must come from forward_batch on the same X and p.
    """
    if cache.get("X") is not X or cache.get("params") is not p:
        raise ContractViolationError("cache does not belong to these inputs")
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (X.shape[0],):
        raise ShapeError(f"labels have shape {labels.shape}, want ({X.shape[0]},)")
    s = cache["scores"]
    w = np.where(labels == 1.0, float(w_pos), float(w_neg))
    r = s - labels
    loss = math.fsum(w * r * r)
    H = p.hidden_size
    du = 2.0 * w * r * s * (1.0 - s)  # d loss / d pre-squash head activation
    hf, hb = cache["hf"], cache["hb"]
    g_head_w = np.concatenate([hf.T @ du, hb.T @ du])
    g_head_b = np.array([du.sum()])
    dhf = du[:, None] * p.head_w[None, :H]
    dhb = du[:, None] * p.head_w[None, H:]
    fW, fU, fb = _direction_backward(X, p.fwd, cache["fwd"], dhf)
    bW, bU, bb = _direction_backward(cache["Xr"], p.bwd, cache["bwd"], dhb)
    grads = ModelParams(CellParams(fW, fU, fb), CellParams(bW, bU, bb), g_head_w, g_head_b)
    return loss, grads


def _tensor_values(tensor) -> np.ndarray:
    values = tensor.values if hasattr(tensor, "values") else np.asarray(tensor, dtype=float)
    if values.ndim != 2:
        raise ShapeError(f"tensor has {values.ndim} dimensions, want 2")
    return values


def forward(tensor, p: ModelParams):
    """Score one example. Returns (score in (0,1), cache for backward)."""
    X = _tensor_values(tensor)[None, :, :]
    s, cache = forward_batch(X, p)
    cache["example"] = tensor
    return float(s[0]), cache


def backward(tensor, label, p: ModelParams, w_pos: float, w_neg: float, cache: dict):
    """Per-example weighted MSE loss and exact gradients via the cache."""
    if cache.get("example") is not tensor:
        raise ContractViolationError("cache was built from a different example")
    loss, grads = backward_batch(cache["X"], np.array([float(label)]), p, w_pos, w_neg, cache)
    return loss, grads


def weighted_mse(scores, labels, w_pos: float, w_neg: float) -> float:
    """Class-weighted sum of squared errors: sum_i w_{y_i} (s_i - y_i)^2.

    Computed with exactly-rounded summation so batch loss equals the sum of
    per-example losses bit for bit.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} vs labels {labels.shape}")
    if not (w_pos > 0 and w_neg > 0):
        raise ShapeError("class weights must be positive")
    w = np.where(labels == 1.0, float(w_pos), float(w_neg))
    r = scores - labels
    return math.fsum(w * r * r)


def save_params(p: ModelParams, path):
    """Write a checkpoint; read-back is bit-identical."""
    p.validate()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", p.hidden_size, len(_BLOCK_NAMES))]
    for name, arr in p.named_arrays():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: bad checkpoint magic")
    off = len(CHECKPOINT_MAGIC)

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        piece = blob[off:off + n]
        off += n
        return piece

    hidden, nblocks = struct.unpack("<II", take(8))
    if nblocks != len(_BLOCK_NAMES):
        raise CheckpointError(f"{path}: expected {len(_BLOCK_NAMES)} blocks, found {nblocks}")
    arrays = {}
    for expected in _BLOCK_NAMES:
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        if name != expected:
            raise CheckpointError(f"{path}: block {name!r} where {expected!r} expected")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").reshape(shape).copy()
        arrays[name] = data
    if off != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after last block")
    p = ModelParams(
        CellParams(arrays["fwd_W"], arrays["fwd_U"], arrays["fwd_b"]),
        CellParams(arrays["bwd_W"], arrays["bwd_U"], arrays["bwd_b"]),
        arrays["head_w"],
        arrays["head_b"],
    )
    try:
        p.validate()
    except ShapeError as exc:
        raise CheckpointError(f"{path}: inconsistent checkpoint: {exc}") from exc
    if p.hidden_size != hidden:
        raise CheckpointError(f"{path}: header hidden={hidden} but blocks imply {p.hidden_size}")
    return p
