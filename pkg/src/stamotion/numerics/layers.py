"""Trainable building blocks: parameters, affine maps and a stacked LSTM."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, affine, sigmoid, tanh
from . import autodiff as ad


class ContractError(ValueError):
    """Raised when array shapes or values violate an operation's contract."""


class Parameter(Tensor):
    """A named leaf tensor that receives gradients."""

    __slots__ = ()

    def __init__(self, value, name=None):
        super().__init__(np.asarray(value), requires_grad=True, name=name)


class Module:
    """Minimal container that discovers parameters in attribute order."""

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            full = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield full, val
            elif isinstance(val, Module):
                yield from val.named_parameters(full + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        params = dict(self.named_parameters())
        if strict and set(params) != set(state):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ContractError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in params.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != p.data.shape:
                raise ContractError(f"{name}: shape {value.shape} != {p.data.shape}")
            p.data = value.astype(p.data.dtype, copy=True)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())


def glorot(rng, din, dout, dtype=np.float32):
    bound = np.sqrt(6.0 / (din + dout))
    return rng.uniform(-bound, bound, size=(din, dout)).astype(dtype)


class Linear(Module):
    def __init__(self, din, dout, rng=None, dtype=np.float32, zero=False):
        self.din = din
        self.dout = dout
        if zero or rng is None:
            w = np.zeros((din, dout), dtype=dtype)
        else:
            w = glorot(rng, din, dout, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(dout, dtype=dtype))

    def __call__(self, x):
        if x.shape[-1] != self.din:
            raise ContractError(f"linear expects last dim {self.din}, got {x.shape}")
        return affine(x, self.weight, self.bias)


def linear_forward(x, weight, bias):
    """``x @ weight + bias`` with shape checking; accepts Tensors or arrays."""
    from .autodiff import as_tensor

    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1:
        raise ContractError("linear_forward expects x[B,Din], weight[Din,Dout], bias[Dout]")
    if x.shape[1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise ContractError(
            f"shape mismatch: x{x.shape} weight{weight.shape} bias{bias.shape}")
    return affine(x, weight, bias)


def softmax_rows(x):
    from .autodiff import as_tensor, softmax

    x = as_tensor(x)
    if x.ndim != 2:
        raise ContractError("softmax_rows expects a 2-D array")
    return softmax(x, axis=-1)


class MLP(Module):
    """Affine layers joined by a configurable activation (no activation on the output)."""

    def __init__(self, sizes, rng, dtype=np.float32, activation="tanh", zero_last=False):
        self.layers = [
            Linear(a, b, rng, dtype, zero=zero_last and i == len(sizes) - 2)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        self.activation = activation

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = _ACTIVATIONS[self.activation](x)
        return x


_ACTIVATIONS = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "identity": lambda x: x,
}


# -- LSTM ---------------------------------------------------------------------

def _lstm_bias(hidden, dtype):
    """Zero gate biases except the forget gate, which starts at 1."""
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0
    return b


def _sig(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_cell_step(x, h, c, w_x, w_h, b):
    """One LSTM cell step in plain numpy; gate order is input, forget, cell, output."""
    z = x @ w_x + h @ w_h + b
    hid = h.shape[-1]
    i = _sig(z[..., :hid])
    f = _sig(z[..., hid:2 * hid])
    g = np.tanh(z[..., 2 * hid:3 * hid])
    o = _sig(z[..., 3 * hid:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def _gate_affine(hid, dt):
    """Scale, multiplier and offset turning one tanh into the four gate activations.

    sigmoid(z) = 0.5 * tanh(0.5 z) + 0.5; the cell block stays a plain tanh.
    Every factor is a power of two, so the rewrite is exact.
    """
    half = np.full(4 * hid, 0.5, dtype=dt)
    half[2 * hid:3 * hid] = 1.0
    add = np.full(4 * hid, 0.5, dtype=dt)
    add[2 * hid:3 * hid] = 0.0
    return half, add


def lstm_layer(x, w_x, w_h, b):
    """Run one LSTM layer over ``x[B, T, Din]`` from zero state; returns ``h[B, T, H]``.

    Backward is hand-written backpropagation through time over the whole window.
    """
    xd = x.data
    B, T, _ = xd.shape
    hid = w_h.shape[0]
    dt = xd.dtype
    scale, add = _gate_affine(hid, dt)
    xproj = ((xd.reshape(B * T, -1) @ w_x.data).reshape(B, T, 4 * hid) + b.data) * scale
    wh_scaled = w_h.data * scale
    hs = np.zeros((B, T + 1, hid), dtype=dt)
    cs = np.zeros((B, T + 1, hid), dtype=dt)
    gates = np.empty((B, T, 4 * hid), dtype=dt)
    tanh_c = np.empty((B, T, hid), dtype=dt)
    for t in range(T):
        a = np.tanh(xproj[:, t] + hs[:, t] @ wh_scaled) * scale + add
        gates[:, t] = a
        cs[:, t + 1] = a[:, hid:2 * hid] * cs[:, t] + a[:, :hid] * a[:, 2 * hid:3 * hid]
        tanh_c[:, t] = np.tanh(cs[:, t + 1])
        hs[:, t + 1] = a[:, 3 * hid:] * tanh_c[:, t]
    out = hs[:, 1:].copy()

    def back(gout):
        i = gates[..., :hid]
        f = gates[..., hid:2 * hid]
        g = gates[..., 2 * hid:3 * hid]
        o = gates[..., 3 * hid:]
        # per-step factors that do not depend on the recursion
        k_c = o * (1.0 - tanh_c * tanh_c)
        k_o = tanh_c * o * (1.0 - o)
        k_ifg = np.stack([g * i * (1.0 - i), cs[:, :-1] * f * (1.0 - f), i * (1.0 - g * g)], axis=2)
        dz = np.empty((B, T, 4, hid), dtype=dt)
        dz_flat = dz.reshape(B, T, 4 * hid)
        wh_t = w_h.data.T
        dh_next = np.zeros((B, hid), dtype=dt)
        dc_next = np.zeros((B, hid), dtype=dt)
        for t in reversed(range(T)):
            dh = gout[:, t] + dh_next
            dc = dc_next + dh * k_c[:, t]
            dz[:, t, :3] = dc[:, None] * k_ifg[:, t]
            dz[:, t, 3] = dh * k_o[:, t]
            dh_next = dz_flat[:, t] @ wh_t
            dc_next = dc * f[:, t]
        dz2 = dz.reshape(B * T, 4 * hid)
        gx = (dz2 @ w_x.data.T).reshape(xd.shape)
        gwx = xd.reshape(B * T, -1).T @ dz2
        gwh = hs[:, :-1].reshape(B * T, hid).T @ dz2
        gb = dz2.sum(axis=0)
        return gx, gwx, gwh, gb

    return Tensor(out, _parents=(x, w_x, w_h, b), _backward=back)


class LSTM(Module):
    """Stacked LSTM; state starts at zero for every call.

    With ``bidirectional`` each layer also runs over the reversed sequence and
    the two hidden streams are concatenated (width ``2 * hidden``).
    """

    def __init__(self, din, hidden, num_layers, rng, dtype=np.float32, bidirectional=False):
        self.din = din
        self.hidden = hidden
        self.num_layers = num_layers
        self.bidirectional = bidirectional
        self.w_x = []
        self.w_h = []
        self.b = []
        if bidirectional:
            self.w_x_rev = []
            self.w_h_rev = []
            self.b_rev = []
        width = 2 * hidden if bidirectional else hidden
        for layer in range(num_layers):
            d = din if layer == 0 else width
            self.w_x.append(Parameter(glorot(rng, d, 4 * hidden, dtype)))
            self.w_h.append(Parameter(glorot(rng, hidden, 4 * hidden, dtype)))
            self.b.append(Parameter(_lstm_bias(hidden, dtype)))
            if bidirectional:
                self.w_x_rev.append(Parameter(glorot(rng, d, 4 * hidden, dtype)))
                self.w_h_rev.append(Parameter(glorot(rng, hidden, 4 * hidden, dtype)))
                self.b_rev.append(Parameter(_lstm_bias(hidden, dtype)))

    @property
    def out_dim(self):
        return 2 * self.hidden if self.bidirectional else self.hidden

    def __call__(self, x):
        if x.ndim != 3 or x.shape[-1] != self.din:
            raise ContractError(f"LSTM expects [B, T, {self.din}], got {x.shape}")
        if x.shape[1] == 0:
            raise ContractError("empty window")
        for layer in range(self.num_layers):
            fwd = lstm_layer(x, self.w_x[layer], self.w_h[layer], self.b[layer])
            if self.bidirectional:
                rev = lstm_layer(x[:, ::-1], self.w_x_rev[layer], self.w_h_rev[layer],
                                 self.b_rev[layer])[:, ::-1]
                fwd = ad.concat([fwd, rev], axis=-1)
            x = fwd
        return x

    def reference(self, x):
        """Step-by-step numpy evaluation used as an independent oracle."""
        x = np.asarray(x)

        def run(seq, wx, wh, b):
            B, T, _ = seq.shape
            h = np.zeros((B, self.hidden), dtype=seq.dtype)
            c = np.zeros_like(h)
            outs = []
            for t in range(T):
                h, c = lstm_cell_step(seq[:, t], h, c, wx.data, wh.data, b.data)
                outs.append(h)
            return np.stack(outs, axis=1)

        for layer in range(self.num_layers):
            out = run(x, self.w_x[layer], self.w_h[layer], self.b[layer])
            if self.bidirectional:
                rev = run(x[:, ::-1], self.w_x_rev[layer], self.w_h_rev[layer], self.b_rev[layer])
                out = np.concatenate([out, rev[:, ::-1]], axis=-1)
            x = out
        return x
