"""
Recurrent networks written directly in numpy.

Architecture of every network: input dropout -> linear + ReLU -> two stacked
LSTM layers (optionally bidirectional) -> linear -> optional sigmoid.

Parameters live in a flat ``dict`` of arrays. LSTM tensors are stacked over
directions (axis 0 is forward/backward) so both directions advance through
time in one batched matmul:

=================  =====================  ==================================
name               shape                  note
=================  =====================  ==================================
``in.W``           (L1, H)
``in.b``           (H,)
``lstm{k}.Wx``     (D, in_k, 4H)          in_0 = H, in_1 = D*H
``lstm{k}.Wh``     (D, H, 4H)
``lstm{k}.b``      (D, 4H)
``out.W``          (D*H, L5)
``out.b``          (L5,)
=================  =====================  ==================================

Gate column order inside the 4H axis is (input, forget, output, candidate).
"""

import copy
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch, FormatError, NonFiniteLoss, SpecMismatch

WEIGHTS_FORMAT = "imucap-weights"
WEIGHTS_VERSION = 1
BCE_EPS = 1e-7
VELOCITY_WINDOWS = (1, 3, 9, 27)


@dataclass(frozen=True)
class NetworkSpec:
    input_width: int
    hidden: int
    output_width: int
    activation: str = "none"
    bidirectional: bool = True
    dropout: float = 0.2
    layers: int = 2
    name: str = ""

    def __post_init__(self):
        if min(self.input_width, self.hidden, self.output_width, self.layers) <= 0:
            raise ValueError("network widths must be positive")
        if self.activation not in ("none", "sigmoid"):
            raise ValueError(f"unknown output activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def directions(self):
        return 2 if self.bidirectional else 1


CANONICAL_SPECS = {
    "pose-s1": NetworkSpec(72, 256, 15, "none", True, name="pose-s1"),
    "pose-s2": NetworkSpec(87, 64, 69, "none", True, name="pose-s2"),
    "pose-s3": NetworkSpec(141, 128, 90, "none", True, name="pose-s3"),
    "trans-b1": NetworkSpec(87, 64, 2, "sigmoid", True, name="trans-b1"),
    "trans-b2": NetworkSpec(141, 256, 3, "none", False, name="trans-b2"),
}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def param_shapes(spec):
    H, D = spec.hidden, spec.directions
    shapes = {"in.W": (spec.input_width, H), "in.b": (H,)}
    for k in range(spec.layers):
        width = H if k == 0 else D * H
        shapes[f"lstm{k}.Wx"] = (D, width, 4 * H)
        shapes[f"lstm{k}.Wh"] = (D, H, 4 * H)
        shapes[f"lstm{k}.b"] = (D, 4 * H)
    shapes["out.W"] = (D * H, spec.output_width)
    shapes["out.b"] = (spec.output_width,)
    return shapes


def init_params(spec, seed=0, dtype=np.float64):
    """
    Projections uniform in +-1/sqrt(fan_in); LSTM weights uniform in
    +-1/sqrt(H); LSTM biases zero except the forget gate (+1).
    """
    rng = np.random.default_rng(seed)
    H = spec.hidden
    params = {}
    for name, shape in param_shapes(spec).items():
        if name.startswith("in."):
            bound = 1.0 / math.sqrt(spec.input_width)
            params[name] = rng.uniform(-bound, bound, shape)
        elif name.startswith("out."):
            bound = 1.0 / math.sqrt(shape[0] if name == "out.W" else param_shapes(spec)["out.W"][0])
            params[name] = rng.uniform(-bound, bound, shape)
        elif name.endswith(".b"):
            b = np.zeros(shape)
            b[:, H:2 * H] = 1.0
            params[name] = b
        else:
            bound = 1.0 / math.sqrt(H)
            params[name] = rng.uniform(-bound, bound, shape)
    return {k: v.astype(dtype) for k, v in params.items()}


class Network:
    """A network spec plus its parameters; inference is a pure function of both."""

    def __init__(self, spec, params, meta=None):
        shapes = param_shapes(spec)
        if set(params) != set(shapes):
            raise FormatError(f"parameter names {sorted(params)} do not match spec")
        for k, shape in shapes.items():
            if tuple(np.shape(params[k])) != shape:
                raise FormatError(f"tensor {k} has shape {np.shape(params[k])}, expected {shape}")
        self.spec = spec
        self.params = {k: np.asarray(v) for k, v in params.items()}
        self.meta = dict(meta or {})
        self._kcache = None

    @classmethod
    def create(cls, spec, seed=0, dtype=np.float64):
        return cls(spec, init_params(spec, seed, dtype))

    @property
    def dtype(self):
        return self.params["in.W"].dtype

    def astype(self, dtype):
        return Network(self.spec, {k: v.astype(dtype) for k, v in self.params.items()}, self.meta)

    def copy(self):
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()}, copy.deepcopy(self.meta))

    # ------------------------------------------------------------------
    # inference

    def __call__(self, x, training=False, seed=None, rng=None):
        return self.forward(x, training, seed, rng)

    def forward(self, x, training=False, seed=None, rng=None):
        """
        Per-frame outputs for a window ``(T, L1)`` or a batch ``(B, T, L1)``.

        Dropout is active only when ``training`` is set; its mask is drawn
        from ``rng`` (or a generator seeded with ``seed``).
        """
        x = np.asarray(x)
        single = x.ndim == 2
        if single:
            x = x[None]
        if training:
            y, _ = self._forward(x, True, rng if rng is not None else np.random.default_rng(seed), keep=False)
        else:
            if x.shape[-1] != self.spec.input_width:
                raise DimensionMismatch(f"expected input width {self.spec.input_width}, got {x.shape[-1]}")
            y = np.stack([self._infer(w) for w in x])
        return y[0] if single else y

    def _kernel(self):
        # Fused inference weights: both directions' input projections side by
        # side, sigmoid-gate columns pre-scaled by 0.5 (exact) so a single tanh
        # over all 4H lanes yields tanh(z/2) for the gates and tanh(z) for the
        # candidate.
        if getattr(self, "_kcache", None) is not None:
            return self._kcache
        P, H = self.params, self.spec.hidden
        scale = np.ones(4 * H, dtype=self.dtype)
        scale[:3 * H] = 0.5
        layers = []
        for k in range(self.spec.layers):
            Wx = P[f"lstm{k}.Wx"] * scale
            layers.append((
                np.ascontiguousarray(np.concatenate(list(Wx), axis=1)),
                np.concatenate(list(P[f"lstm{k}.b"] * scale)),
                np.ascontiguousarray(P[f"lstm{k}.Wh"] * scale),
            ))
        self._kcache = layers
        return layers

    def forward_at(self, x, index):
        """
        Inference output for frame ``index`` of a single window ``(T, L1)``.

        Equal to ``forward(x)[index]`` up to rounding, but the last recurrent
        layer only runs the steps that reach ``index``.
        """
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[-1] != self.spec.input_width:
            raise DimensionMismatch(f"expected a (T, {self.spec.input_width}) window, got {x.shape}")
        if not -len(x) <= index < len(x):
            raise IndexError(f"frame {index} outside a window of {len(x)}")
        return self._infer(x, index % len(x))

    def _infer(self, x, at=None):
        P, spec = self.params, self.spec
        H, D = spec.hidden, spec.directions
        x = np.asarray(x, dtype=self.dtype)
        T = len(x)
        u = x @ P["in.W"]
        u += P["in.b"]
        np.maximum(u, 0.0, out=u)
        kernel = self._kernel()
        for k, (Wx, b, Wh) in enumerate(kernel):
            Z = u @ Wx
            Z += b
            Z = Z.reshape(T, D, 4 * H).transpose(1, 0, 2)
            if D == 2:
                Z = np.stack([Z[0], Z[1, ::-1]])
            if at is not None and k == len(kernel) - 1:
                # forward direction up to `at`, backward direction down to it
                h = [_recur(Z[0:1, :at + 1], Wh[0:1])[0, -1]]
                if D == 2:
                    h.append(_recur(Z[1:2, :T - at], Wh[1:2])[0, -1])
                u = np.concatenate(h)[None]
            elif H >= 256:
                hs = np.concatenate([_recur(Z[d:d + 1], Wh[d:d + 1]) for d in range(D)])
                u = np.concatenate([hs[0], hs[1, ::-1]], axis=-1) if D == 2 else hs[0]
            else:
                hs = _recur(Z, Wh)
                u = np.concatenate([hs[0], hs[1, ::-1]], axis=-1) if D == 2 else hs[0]
        y = u @ P["out.W"]
        y += P["out.b"]
        if spec.activation == "sigmoid":
            y = _sigmoid(y)
        return y[0] if at is not None else y

    def initial_state(self):
        H = self.spec.hidden
        z = np.zeros((self.spec.layers, H), dtype=self.dtype)
        return (z, z.copy())

    def step(self, state, x):
        """
        One streaming step of a unidirectional network.

        Returns ``(new_state, output)``; the input state is not modified.
        """
        if self.spec.bidirectional:
            raise SpecMismatch("streaming needs a unidirectional network")
        P, H = self.params, self.spec.hidden
        x = np.asarray(x, dtype=self.dtype)
        if x.shape != (self.spec.input_width,):
            raise DimensionMismatch(f"expected input width {self.spec.input_width}, got {x.shape}")
        h_all, c_all = state
        h_new, c_new = np.empty_like(h_all), np.empty_like(c_all)
        u = np.maximum(x @ P["in.W"] + P["in.b"], 0.0)
        for k in range(self.spec.layers):
            z = (u @ P[f"lstm{k}.Wx"][0] + P[f"lstm{k}.b"][0]) + h_all[k] @ P[f"lstm{k}.Wh"][0]
            s = _sigmoid(z[:3 * H])
            g = np.tanh(z[3 * H:])
            c = s[H:2 * H] * c_all[k] + s[:H] * g
            h = s[2 * H:3 * H] * np.tanh(c)
            h_new[k], c_new[k] = h, c
            u = h
        y = u @ P["out.W"] + P["out.b"]
        if self.spec.activation == "sigmoid":
            y = _sigmoid(y)
        return (h_new, c_new), y

    # ------------------------------------------------------------------
    # forward / backward with cache

    def _forward(self, x, training, rng, keep):
        spec, P = self.spec, self.params
        if x.shape[-1] != spec.input_width:
            raise DimensionMismatch(f"expected input width {spec.input_width}, got {x.shape[-1]}")
        x = x.astype(self.dtype, copy=False)
        B, T, _ = x.shape
        D = spec.directions
        cache = {"x": x}
        if training and spec.dropout > 0:
            mask = (rng.random(x.shape) >= spec.dropout).astype(self.dtype) / (1.0 - spec.dropout)
            xd = x * mask
            cache["mask"] = mask
        else:
            xd = x
        cache["xd"] = xd
        a0 = xd @ P["in.W"] + P["in.b"]
        u = np.maximum(a0, 0.0)
        cache["a0"] = a0
        layers = []
        for k in range(spec.layers):
            U = np.stack([u, u[:, ::-1]]) if D == 2 else u[None]
            Z = np.matmul(U.reshape(D, B * T, -1), P[f"lstm{k}.Wx"]).reshape(D, B, T, -1)
            Z += P[f"lstm{k}.b"][:, None, None, :]
            hs, lc = _lstm_forward(Z, P[f"lstm{k}.Wh"], keep)
            if keep:
                lc["U"] = U
                layers.append(lc)
            u = np.concatenate([hs[0], hs[1][:, ::-1]], axis=-1) if D == 2 else hs[0]
        cache["layers"] = layers
        cache["top"] = u
        y = u @ P["out.W"] + P["out.b"]
        if spec.activation == "sigmoid":
            y = _sigmoid(y)
        cache["y"] = y
        return y, cache

    def forward_with_cache(self, x, training=False, rng=None):
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        return self._forward(x, training, rng if rng is not None else np.random.default_rng(), keep=True)

    def backward(self, cache, dy):
        """Gradients of every parameter given ``dL/dy`` (post-activation) for a batch."""
        spec, P = self.spec, self.params
        D, H = spec.directions, spec.hidden
        y, top = cache["y"], cache["top"]
        B, T, _ = y.shape
        dy = np.asarray(dy, dtype=self.dtype)
        if spec.activation == "sigmoid":
            dy = dy * y * (1.0 - y)
        grads = {
            "out.W": top.reshape(B * T, -1).T @ dy.reshape(B * T, -1),
            "out.b": dy.sum(axis=(0, 1)),
        }
        du = dy @ P["out.W"].T
        for k in reversed(range(spec.layers)):
            lc = cache["layers"][k]
            if D == 2:
                dH = np.stack([du[..., :H], du[..., H:][:, ::-1]])
            else:
                dH = du[None]
            dZ = _lstm_backward(lc, P[f"lstm{k}.Wh"], dH)
            U = lc["U"]
            flatZ = dZ.reshape(D, B * T, 4 * H)
            grads[f"lstm{k}.Wx"] = np.matmul(np.swapaxes(U.reshape(D, B * T, -1), 1, 2), flatZ)
            grads[f"lstm{k}.Wh"] = np.matmul(np.swapaxes(lc["Hprev"].reshape(D, B * T, H), 1, 2), flatZ)
            grads[f"lstm{k}.b"] = flatZ.sum(axis=1)
            dU = np.matmul(dZ, np.swapaxes(P[f"lstm{k}.Wx"], 1, 2)[:, None])
            du = dU[0] + dU[1][:, ::-1] if D == 2 else dU[0]
        da0 = du * (cache["a0"] > 0)
        xd = cache["xd"]
        grads["in.W"] = xd.reshape(B * T, -1).T @ da0.reshape(B * T, -1)
        grads["in.b"] = da0.sum(axis=(0, 1))
        return grads

    # ------------------------------------------------------------------
    # serialization

    def to_dict(self):
        return {
            "format": WEIGHTS_FORMAT,
            "version": WEIGHTS_VERSION,
            "spec": asdict(self.spec),
            "meta": self.meta,
            "tensors": [{"name": k, "shape": list(v.shape),
                         "values": v.astype(np.float64).ravel().tolist()}
                        for k, v in self.params.items()],
        }

    @classmethod
    def from_dict(cls, doc, dtype=np.float64):
        if doc.get("format") != WEIGHTS_FORMAT:
            raise FormatError("not a weights document")
        if doc.get("version") != WEIGHTS_VERSION:
            raise FormatError(f"unsupported weights version {doc.get('version')}")
        spec = NetworkSpec(**doc["spec"])
        params = {}
        for t in doc["tensors"]:
            params[t["name"]] = np.asarray(t["values"], dtype=np.float64).reshape(t["shape"]).astype(dtype)
        return cls(spec, params, doc.get("meta"))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path, dtype=np.float64):
        with open(path) as f:
            return cls.from_dict(json.load(f), dtype)


def _recur(Z, Wh):
    """Inference recurrence over pre-scaled inputs ``Z (D, T, 4H)``; returns ``(D, T, H)``."""
    D, T, G = Z.shape
    H = G // 4
    dt = Z.dtype
    hs = np.empty((D, T, H), dtype=dt)
    c = np.zeros((D, H), dtype=dt)
    z = np.empty((D, G), dtype=dt)
    tmp = np.empty((D, H), dtype=dt)
    h = np.zeros((D, H), dtype=dt)
    for t in range(T):
        if D == 1:
            np.matmul(h[0], Wh[0], out=z[0])
        else:
            np.matmul(h[:, None], Wh, out=z[:, None])
        z += Z[:, t]
        np.tanh(z, out=z)
        s = z[:, :3 * H]
        s *= 0.5
        s += 0.5
        np.multiply(z[:, H:2 * H], c, out=c)
        np.multiply(z[:, :H], z[:, 3 * H:], out=tmp)
        c += tmp
        np.tanh(c, out=tmp)
        h = hs[:, t]
        np.multiply(z[:, 2 * H:3 * H], tmp, out=h)
    return hs


def _lstm_forward(Z, Wh, keep):
    """
    Run D independent LSTM recurrences in lockstep.

    Z : (D, B, T, 4H) pre-computed input contributions (bias included).
    Returns hidden states (D, B, T, H) and, if ``keep``, the backward cache.
    """
    D, B, T, G = Z.shape
    H = G // 4
    dt = Z.dtype
    hs = np.empty((D, B, T, H), dtype=dt)
    h = np.zeros((D, B, H), dtype=dt)
    c = np.zeros((D, B, H), dtype=dt)
    if keep:
        acts = np.empty_like(Z)
        cs = np.empty((D, B, T, H), dtype=dt)
        tcs = np.empty((D, B, T, H), dtype=dt)
    for t in range(T):
        z = Z[:, :, t] + np.matmul(h, Wh)
        s = _sigmoid(z[..., :3 * H])
        g = np.tanh(z[..., 3 * H:])
        c = s[..., H:2 * H] * c + s[..., :H] * g
        tc = np.tanh(c)
        h = s[..., 2 * H:] * tc
        hs[:, :, t] = h
        if keep:
            acts[:, :, t, :3 * H] = s
            acts[:, :, t, 3 * H:] = g
            cs[:, :, t] = c
            tcs[:, :, t] = tc
    cache = None
    if keep:
        hprev = np.zeros_like(hs)
        hprev[:, :, 1:] = hs[:, :, :-1]
        cache = {"acts": acts, "C": cs, "TC": tcs, "Hprev": hprev}
    return hs, cache


def _lstm_backward(cache, Wh, dH):
    acts, cs, tcs = cache["acts"], cache["C"], cache["TC"]
    D, B, T, G = acts.shape
    H = G // 4
    dZ = np.empty_like(acts)
    WhT = np.swapaxes(Wh, 1, 2)
    dh_next = np.zeros((D, B, H), dtype=acts.dtype)
    dc_next = np.zeros((D, B, H), dtype=acts.dtype)
    zero = np.zeros((D, B, H), dtype=acts.dtype)
    for t in reversed(range(T)):
        a = acts[:, :, t]
        i, f, o, g = a[..., :H], a[..., H:2 * H], a[..., 2 * H:3 * H], a[..., 3 * H:]
        tc = tcs[:, :, t]
        c_prev = cs[:, :, t - 1] if t > 0 else zero
        dh = dH[:, :, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dZ[:, :, t]
        dz[..., :H] = dc * g * i * (1.0 - i)
        dz[..., H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[..., 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[..., 3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = np.matmul(dz, WhT)
    return dZ


def forward_window(net, inputs, training=False, seed=None):
    """Per-frame outputs of ``net`` over one window ``(T, L1)``."""
    return net.forward(inputs, training=training, seed=seed)


def stream_step(net, state, x):
    """``(state, output)`` after feeding one frame to a unidirectional network."""
    return net.step(state, x)


# --------------------------------------------------------------------------
# losses: value and gradient w.r.t. the (post-activation) prediction.
# Sum over output dimensions; per-frame losses average over frames; all
# losses average over the windows of a batch.

def _as_batch(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype if pred.dtype.kind == "f" else np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs target {target.shape}")
    if pred.ndim == 1:
        return pred[None, None], target[None, None]
    if pred.ndim == 2:
        return pred[None], target[None]
    return pred, target


def mse_and_grad(pred, target):
    p, t = _as_batch(pred, target)
    B, T, _ = p.shape
    d = p - t
    return float(np.sum(d * d) / (B * T)), (2.0 / (B * T)) * d


def contact_and_grad(pred, target):
    p, t = _as_batch(pred, target)
    B, T, _ = p.shape
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    val = -np.sum(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)) / (B * T)
    inside = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)
    grad = np.where(inside, (pc - t) / (pc * (1.0 - pc)), 0.0) / (B * T)
    return float(val), grad.astype(p.dtype, copy=False)


def velocity_and_grad(pred, target, windows=VELOCITY_WINDOWS):
    """
    Accumulated-displacement loss: for each n, sum over consecutive
    non-overlapping n-frame windows of the squared norm of the summed error.
    """
    p, t = _as_batch(pred, target)
    B, T, K = p.shape
    d = p - t
    val = 0.0
    grad = np.zeros_like(d)
    for n in windows:
        m = T // n
        if m == 0:
            continue
        s = d[:, :m * n].reshape(B, m, n, K).sum(axis=2)
        val += float(np.sum(s * s))
        grad[:, :m * n] += np.repeat(2.0 * s, n, axis=1)
    return val / B, grad / B


LOSSES = {
    "mse": mse_and_grad,
    "contact": contact_and_grad,
    "velocity": velocity_and_grad,
    "velocity1": lambda p, t: velocity_and_grad(p, t, windows=(1,)),
}


def loss_mse(pred, target):
    return mse_and_grad(pred, target)[0]


def loss_contact(pred, target):
    return contact_and_grad(pred, target)[0]


def loss_velocity(pred, target, windows=VELOCITY_WINDOWS):
    return velocity_and_grad(pred, target, windows)[0]


# --------------------------------------------------------------------------
# training

@dataclass
class TrainingConfig:
    lr: float = 1e-3
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    seed: int = 0
    clip_norm: float = 10.0
    window: int = 300
    noise_sigma: float = 0.0
    noise_columns: tuple = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs < 0 or self.window <= 0:
            raise ValueError("training hyperparameters must be positive")
        if self.noise_sigma < 0 or self.clip_norm <= 0:
            raise ValueError("noise sigma must be >= 0 and clip norm > 0")


@dataclass
class TrainResult:
    net: Network
    losses: list = field(default_factory=list)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k in sorted(params):
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            params[k] -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def clip_by_global_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


def make_windows(sequences, window):
    """Cut ``(inputs, targets)`` sequences into consecutive windows of at most ``window`` frames."""
    out = []
    for x, y in sequences:
        x, y = np.asarray(x), np.asarray(y)
        if len(x) != len(y):
            raise DimensionMismatch("inputs and targets differ in length")
        for s in range(0, len(x), window):
            out.append((x[s:s + window], y[s:s + window]))
    return out


def _batches(windows, batch_size, rng):
    """Equal-length batches: windows are grouped by length, shuffled, chunked."""
    groups = {}
    for i, (x, _) in enumerate(windows):
        groups.setdefault(len(x), []).append(i)
    batches = []
    for length in sorted(groups):
        idx = np.array(groups[length])
        rng.shuffle(idx)
        batches.extend(idx[s:s + batch_size] for s in range(0, len(idx), batch_size))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def train(net, sequences, loss, config=None, log=None):
    """
    Train ``net`` on ``(inputs, targets)`` sequences with Adam and BPTT.

    Sequences are cut into windows of ``config.window`` frames. The returned
    network is a new object (float64); the input network is left untouched,
    so passing a trained network fine-tunes it. ``log(epoch, loss)`` is called
    after every epoch.
    """
    config = config or TrainingConfig()
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; expected one of {sorted(LOSSES)}")
    loss_fn = LOSSES[loss]
    windows = make_windows(sequences, config.window)
    if not windows:
        raise ValueError("training data is empty")
    dtype = np.dtype(config.dtype)
    work = net.astype(dtype)
    windows = [(x.astype(dtype), y.astype(dtype)) for x, y in windows]
    opt = Adam(work.params, config.lr, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)
    cols = config.noise_columns
    history = []
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        for b, idx in enumerate(_batches(windows, config.batch_size, rng)):
            x = np.stack([windows[i][0] for i in idx])
            y = np.stack([windows[i][1] for i in idx])
            if config.noise_sigma > 0:
                x = x.copy()
                sl = slice(*cols) if cols is not None else slice(None)
                x[..., sl] += rng.normal(0.0, config.noise_sigma, x[..., sl].shape).astype(dtype)
            pred, cache = work.forward_with_cache(x, training=True, rng=rng)
            value, dpred = loss_fn(pred, y)
            if not math.isfinite(value):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch {b}", epoch, b)
            grads = work.backward(cache, dpred)
            clip_by_global_norm(grads, config.clip_norm)
            opt.step(work.params, grads)
            total += value * len(idx)
            count += len(idx)
        history.append(total / count)
        if log is not None:
            log(epoch, history[-1])
    trained = work.astype(np.float64)
    trained.meta.setdefault("training", [])
    trained.meta["training"] = list(trained.meta["training"]) + [
        {"loss": loss, "config": {k: v for k, v in asdict(config).items()}, "final_loss": history[-1] if history else None}]
    return TrainResult(trained, history)
