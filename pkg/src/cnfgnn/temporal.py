"""On-node GRU encoder-decoder.

The encoder runs a GRU over the ``m`` input frames from a zero state and
returns its final hidden state. The decoder starts from the concatenation of
that state with the server-provided graph embedding and rolls out ``n``
autoregressive predictions, feeding each projected output back as the next
input.

Parameters live in a plain dict of leaf tensors keyed by :data:`PARAM_ORDER`.
Every function also accepts "stacked" parameters with a leading node axis
``V`` (and inputs with the same leading axis); numpy's batched matmul then
evaluates all nodes at once, which is how the federation layer runs clients
in parallel.
"""
from __future__ import annotations

import numpy as np

from . import numerics as nx
from .errors import ContractError, DimensionError
from .numerics import Tensor

PARAM_ORDER = (
    "enc.w_ih", "enc.w_hh", "enc.b_ih", "enc.b_hh",
    "dec.w_ih", "dec.w_hh", "dec.b_ih", "dec.b_hh",
    "out.w", "out.b",
)


def param_shapes(input_dim: int, enc_hidden: int, gn_hidden: int) -> dict[str, tuple]:
    d, h = input_dim, enc_hidden
    hd = enc_hidden + gn_hidden
    return {
        "enc.w_ih": (d, 3 * h), "enc.w_hh": (h, 3 * h), "enc.b_ih": (1, 3 * h), "enc.b_hh": (1, 3 * h),
        "dec.w_ih": (d, 3 * hd), "dec.w_hh": (hd, 3 * hd), "dec.b_ih": (1, 3 * hd), "dec.b_hh": (1, 3 * hd),
        "out.w": (hd, d), "out.b": (1, d),
    }


def init_node_params(input_dim: int, enc_hidden: int, gn_hidden: int,
                     rng: np.random.Generator, num_nodes: int | None = None) -> dict[str, Tensor]:
    """Uniform(-1/sqrt(fan), 1/sqrt(fan)) initialisation.

    With ``num_nodes`` the same draw is replicated along a leading node axis,
    so every node starts from one shared model.
    """
    shapes = param_shapes(input_dim, enc_hidden, gn_hidden)
    hd = enc_hidden + gn_hidden
    fan = {"enc": enc_hidden, "dec": hd, "out": hd}
    params = {}
    for name in PARAM_ORDER:
        bound = 1.0 / np.sqrt(fan[name.split(".")[0]])
        arr = rng.uniform(-bound, bound, size=shapes[name])
        if num_nodes is not None:
            arr = np.repeat(arr[None], num_nodes, axis=0)
        params[name] = Tensor(arr, requires_grad=True)
    return params


def count_params(params: dict[str, Tensor], stacked: bool = False) -> int:
    total = sum(p.size for p in params.values())
    if stacked:
        total //= next(iter(params.values())).shape[0]
    return int(total)


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """One GRU step with reset/update/candidate gates (r, z, n order).

    ``r = sig(x W_r + b_ir + h U_r + b_hr)``, ``z`` likewise,
    ``n = tanh(x W_n + b_in + r * (h U_n + b_hn))`` and
    ``h' = (1 - z) * n + z * h``. Evaluated as a single differentiable op
    with a hand-derived backward (the logistic is evaluated through its
    tanh form); :func:`gru_cell_composite` builds the same
    cell from primitive ops and serves as its reference.
    """
    x, h, w_ih, w_hh, b_ih, b_hh = (nx.as_tensor(t) for t in (x, h, w_ih, w_hh, b_ih, b_hh))
    hs = h.shape[-1]
    if w_hh.shape[-2:] != (hs, 3 * hs) or w_ih.shape[-1] != 3 * hs or x.shape[-1] != w_ih.shape[-2]:
        raise DimensionError(f"GRU shapes do not fit: x {x.shape}, h {h.shape}, "
                             f"w_ih {w_ih.shape}, w_hh {w_hh.shape}")
    # in-place arithmetic below keeps temporaries to a minimum; these
    # activations are the bulk of the memory traffic in training
    gi = x.data @ w_ih.data
    gi += b_ih.data
    gh = h.data @ w_hh.data
    gh += b_hh.data
    rz = gi[..., :2 * hs] + gh[..., :2 * hs]
    rz *= 0.5
    np.tanh(rz, out=rz)
    rz *= 0.5
    rz += 0.5
    r, z = rz[..., :hs], rz[..., hs:]
    gh_n = gh[..., 2 * hs:]
    n = r * gh_n
    n += gi[..., 2 * hs:]
    np.tanh(n, out=n)
    out = h.data - n
    out *= z
    out += n

    def fn(g):
        d_gi = np.empty(g.shape[:-1] + (3 * hs,))
        d_r, d_z, d_n = d_gi[..., :hs], d_gi[..., hs:2 * hs], d_gi[..., 2 * hs:]
        # d_n = g (1 - z)(1 - n^2)
        np.multiply(n, n, out=d_n)
        np.subtract(1.0, d_n, out=d_n)
        d_n *= g
        d_n *= 1.0 - z
        # d_r = d_n gh_n r (1 - r)
        np.multiply(d_n, gh_n, out=d_r)
        d_r *= r
        d_r *= 1.0 - r
        # d_z = g (h - n) z (1 - z)
        np.subtract(h.data, n, out=d_z)
        d_z *= g
        d_z *= z
        d_z *= 1.0 - z
        d_gh = d_gi.copy()
        d_gh[..., 2 * hs:] *= r
        gx, gw_ih = nx.matmul_grads(x, w_ih, d_gi)
        gh_, gw_hh = nx.matmul_grads(h, w_hh, d_gh)
        if h.requires_grad:
            gh_ = gh_ + nx.unbroadcast(g * z, h.shape)
        gb_ih = nx.unbroadcast(d_gi, b_ih.shape) if b_ih.requires_grad else None
        gb_hh = nx.unbroadcast(d_gh, b_hh.shape) if b_hh.requires_grad else None
        return gx, gh_, gw_ih, gw_hh, gb_ih, gb_hh

    return nx.make_op(out, (x, h, w_ih, w_hh, b_ih, b_hh), fn, "gru_cell")


def gru_cell_composite(x, h, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """The same cell assembled from primitive differentiable ops."""
    hsz = h.shape[-1]
    gi = nx.matmul(x, w_ih) + b_ih
    gh = nx.matmul(h, w_hh) + b_hh
    r = nx.sigmoid(nx.slice_last(gi, 0, hsz) + nx.slice_last(gh, 0, hsz))
    z = nx.sigmoid(nx.slice_last(gi, hsz, 2 * hsz) + nx.slice_last(gh, hsz, 2 * hsz))
    n = nx.tanh(nx.slice_last(gi, 2 * hsz, 3 * hsz) + r * nx.slice_last(gh, 2 * hsz, 3 * hsz))
    return (1.0 - z) * n + z * h


def _cell_args(params, prefix):
    return (params[f"{prefix}.w_ih"], params[f"{prefix}.w_hh"],
            params[f"{prefix}.b_ih"], params[f"{prefix}.b_hh"])


def encode(x: np.ndarray, params: dict[str, Tensor]) -> Tensor:
    """Final GRU hidden state for inputs ``x`` of shape ``(..., B, m, D)``."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ContractError("encoder input contains NaN or Inf")
    w_ih = params["enc.w_ih"]
    if x.shape[-1] != w_ih.shape[-2]:
        raise DimensionError(f"input feature dim {x.shape[-1]} does not match encoder {w_ih.shape}")
    hsz = params["enc.w_hh"].shape[-2]
    h = Tensor(np.zeros(x.shape[:-2] + (hsz,)))
    args = _cell_args(params, "enc")
    for t in range(x.shape[-2]):
        h = gru_cell(Tensor(x[..., t, :]), h, *args)
    return h


def decode(last_frame: np.ndarray, state: Tensor, params: dict[str, Tensor], horizon: int) -> Tensor:
    """Autoregressive rollout; returns predictions of shape ``(..., B, horizon, D)``."""
    width = params["dec.w_hh"].shape[-2]
    if state.shape[-1] != width:
        raise DimensionError(f"decoder state width {state.shape[-1]} != decoder hidden width {width}")
    if horizon < 1:
        raise ContractError("horizon must be at least 1")
    args = _cell_args(params, "dec")
    w, b = params["out.w"], params["out.b"]
    inp = nx.as_tensor(last_frame)
    h = state
    outs = []
    for _ in range(horizon):
        h = gru_cell(inp, h, *args)
        inp = nx.matmul(h, w) + b
        outs.append(nx.reshape(inp, inp.shape[:-1] + (1, inp.shape[-1])))
    return nx.concat(outs, axis=-2)


def decoder_state(h_c: Tensor, h_g) -> Tensor:
    """``[h_c ; h_G]`` along the feature axis."""
    return nx.concat([h_c, nx.as_tensor(h_g)], axis=-1)


def predict(x: np.ndarray, h_g, params: dict[str, Tensor], horizon: int) -> Tensor:
    h_c = encode(x, params)
    return decode(x[..., -1, :], decoder_state(h_c, h_g), params, horizon)


def node_loss(y_hat: Tensor, y) -> Tensor:
    """Mean squared error over every element."""
    y = nx.as_tensor(y)
    if y_hat.shape != y.shape:
        raise DimensionError(f"prediction {y_hat.shape} and target {y.shape} differ")
    return nx.mean(nx.square(y_hat - y))


def stacked_node_loss(y_hat: Tensor, y) -> Tensor:
    """Sum over the leading node axis of each node's MSE."""
    y = nx.as_tensor(y)
    if y_hat.shape != y.shape:
        raise DimensionError(f"prediction {y_hat.shape} and target {y.shape} differ")
    per_node = int(np.prod(y.shape[1:]))
    return nx.mul(nx.tsum(nx.square(y_hat - y)), 1.0 / per_node)
