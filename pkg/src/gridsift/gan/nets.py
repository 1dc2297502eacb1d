"""Small sequence networks in plain numpy with analytic backpropagation.

Both adversarial players share the same building blocks: a single-layer
LSTM with fused gate weights and a dense head.  The gate weight matrix W
has shape (1 + n_in + n_hidden, 4 * n_hidden): the first row is the bias,
then input rows, then recurrent rows; gate columns are ordered
[input, forget, output, candidate].

Internally the recurrence runs feature-major: per-step activations are
(4 * n_hidden, batch) so each gate block is a contiguous row slice, which
keeps every elementwise op on the hot path SIMD-friendly.  The input
projection is hoisted out of the time loop and the weight/input gradients
are assembled in bulk after it; only the recurrent matmul is per-step.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function via tanh (single ufunc pass)."""
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow; log sigmoid(x) == -softplus(-x)."""
    return np.logaddexp(0.0, x)


class LSTM:
    """Single-layer LSTM over (batch, time, features) inputs."""

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator):
        self.n_in = n_in
        self.n_hidden = n_hidden
        d = 1 + n_in + n_hidden
        self.W = rng.normal(0.0, 1.0 / np.sqrt(d), (d, 4 * n_hidden))
        self.W[0] = 0.0
        # positive forget bias keeps early cell gradients alive
        self.W[0, n_hidden:2 * n_hidden] = 1.0

    def forward(self, X: np.ndarray, need_cache: bool = True):
        """Run the recurrence; returns (H, cache) with H shaped (T, n_hidden, B).

        X must be time-major (T, B, n_in).  With need_cache=False only the
        hidden sequence is produced (scoring path).
        """
        X = np.ascontiguousarray(X)
        T, B, n_in = X.shape
        H = self.n_hidden
        Xf = np.ascontiguousarray(X.transpose(0, 2, 1))     # (T, n_in, B)
        WxT = np.ascontiguousarray(self.W[1:1 + n_in].T)    # (4H, n_in)
        WHT = np.ascontiguousarray(self.W[1 + n_in:].T)     # (4H, H)
        # bias + input contribution for every step at once
        GX = np.matmul(WxT[None], Xf)                       # (T, 4H, B)
        GX += self.W[0][None, :, None]
        Hs = np.empty((T, H, B))
        if need_cache:
            IFOA = np.empty((T, 4 * H, B))
            Cs = np.empty((T, H, B))
            TC = np.empty((T, H, B))
        else:
            gate_buf = np.empty((4 * H, B))
            c_buf = np.empty((H, B))
            tc_buf = np.empty((H, B))
        tmp = np.empty((H, B))
        h = np.zeros((H, B))
        c = np.zeros((H, B))
        for t in range(T):
            if need_cache:
                gates = IFOA[t]
                c_new = Cs[t]
                tc = TC[t]
            else:
                gates, c_new, tc = gate_buf, c_buf, tc_buf
            np.matmul(WHT, h, out=gates)
            gates += GX[t]
            gs = gates[:3 * H]
            gs *= 0.5
            np.tanh(gs, out=gs)
            gs += 1.0
            gs *= 0.5
            ga = gates[3 * H:]
            np.tanh(ga, out=ga)
            np.multiply(gates[H:2 * H], c, out=c_new)
            np.multiply(gates[:H], ga, out=tmp)
            c_new += tmp
            np.tanh(c_new, out=tc)
            np.multiply(gates[2 * H:3 * H], tc, out=Hs[t])
            h = Hs[t]
            c = c_new
        cache = {"Xf": Xf, "H": Hs, "IFOA": IFOA, "C": Cs, "TC": TC} if need_cache else None
        return Hs, cache

    def backward(self, dHs: np.ndarray, cache: dict):
        """Backpropagate through time.

        dHs is the loss gradient w.r.t. the hidden sequence (T, n_hidden, B).
        Returns (dXf, dW) with dXf feature-major (T, n_in, B).
        """
        Xf, Hs, IFOA, Cs, TC = cache["Xf"], cache["H"], cache["IFOA"], cache["C"], cache["TC"]
        T, H, B = dHs.shape
        n_in = self.n_in
        WH = np.ascontiguousarray(self.W[1 + n_in:])        # (H, 4H)
        DG = np.empty((T, 4 * H, B))
        dh = np.empty((H, B))
        dhn = np.zeros((H, B))
        dc = np.zeros((H, B))
        tmp = np.empty((H, B))
        for t in range(T - 1, -1, -1):
            gates = IFOA[t]
            i = gates[:H]
            f = gates[H:2 * H]
            o = gates[2 * H:3 * H]
            a = gates[3 * H:]
            tc = TC[t]
            dgates = DG[t]
            np.add(dHs[t], dhn, out=dh)
            # dc accumulates: dh * o * (1 - tc^2) + carried dc_next
            np.multiply(tc, tc, out=tmp)
            np.subtract(1.0, tmp, out=tmp)
            tmp *= o
            tmp *= dh
            dc += tmp
            dgi = dgates[:H]
            np.multiply(dc, a, out=dgi)
            dgi *= i
            np.subtract(1.0, i, out=tmp)
            dgi *= tmp
            dgf = dgates[H:2 * H]
            if t > 0:
                np.multiply(dc, Cs[t - 1], out=dgf)
                dgf *= f
                np.subtract(1.0, f, out=tmp)
                dgf *= tmp
            else:
                dgf[...] = 0.0
            dgo = dgates[2 * H:3 * H]
            np.multiply(dh, tc, out=dgo)
            dgo *= o
            np.subtract(1.0, o, out=tmp)
            dgo *= tmp
            dga = dgates[3 * H:]
            np.multiply(dc, i, out=dga)
            np.multiply(a, a, out=tmp)
            np.subtract(1.0, tmp, out=tmp)
            dga *= tmp
            np.matmul(WH, dgates, out=dhn)
            dc *= f
        dW = np.empty_like(self.W)
        dW[0] = DG.sum(axis=(0, 2))
        dW[1:1 + n_in] = np.matmul(DG, Xf.transpose(0, 2, 1)).sum(axis=0).T
        if T > 1:
            dW[1 + n_in:] = np.matmul(DG[1:], Hs[:-1].transpose(0, 2, 1)).sum(axis=0).T
        else:
            dW[1 + n_in:] = 0.0
        dXf = np.matmul(self.W[1:1 + n_in][None], DG)       # (T, n_in, B)
        return dXf, dW


class Dense:
    """Affine head parameters; the owning network applies them."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_in, n_out))
        self.b = np.zeros(n_out)


class Generator:
    """Noise sequence to sample window: LSTM plus a per-step dense head."""

    def __init__(self, noise_dim: int, n_hidden: int, rng: np.random.Generator):
        self.noise_dim = noise_dim
        self.n_hidden = n_hidden
        self.lstm = LSTM(noise_dim, n_hidden, rng)
        self.out = Dense(n_hidden, 1, rng)

    def forward(self, Z: np.ndarray, need_cache: bool = True):
        """Z is (B, T, noise_dim); returns ((B, T) samples, cache)."""
        Zt = np.ascontiguousarray(Z.transpose(1, 0, 2))
        Hs, lstm_cache = self.lstm.forward(Zt, need_cache)  # (T, H, B)
        Y = np.matmul(self.out.w.T[None], Hs)[:, 0]         # (T, B)
        Y += self.out.b[0]
        cache = {"lstm": lstm_cache, "H": Hs} if need_cache else None
        return Y.T, cache

    def backward(self, dY: np.ndarray, cache: dict) -> dict:
        """dY is (B, T); returns parameter gradients."""
        dYt = np.ascontiguousarray(dY.T)                    # (T, B)
        Hs = cache["H"]
        dw = np.matmul(Hs, dYt[:, :, None]).sum(axis=0)
        db = np.array([dYt.sum()])
        dHs = self.out.w[:, 0][None, :, None] * dYt[:, None, :]
        _, dW = self.lstm.backward(dHs, cache["lstm"])
        return {"lstm.W": dW, "out.w": dw, "out.b": db}

    def params(self) -> dict[str, np.ndarray]:
        return {"lstm.W": self.lstm.W, "out.w": self.out.w, "out.b": self.out.b}


class Discriminator:
    """Window to realness logit: LSTM, last hidden state, dense, sigmoid."""

    def __init__(self, n_hidden: int, rng: np.random.Generator):
        self.n_hidden = n_hidden
        self.lstm = LSTM(1, n_hidden, rng)
        self.out = Dense(n_hidden, 1, rng)

    def forward(self, X: np.ndarray, need_cache: bool = True):
        """X is (B, T) standardized samples; returns ((B,) logits, cache)."""
        Xt = np.ascontiguousarray(X.T[:, :, None])          # (T, B, 1)
        Hs, lstm_cache = self.lstm.forward(Xt, need_cache)  # (T, H, B)
        h_last = Hs[-1]
        logits = self.out.w[:, 0] @ h_last + self.out.b[0]
        cache = {"lstm": lstm_cache, "h_last": h_last, "T": Hs.shape[0]} if need_cache else None
        return logits, cache

    def backward(self, dlogits: np.ndarray, cache: dict):
        """dlogits is (B,); returns (dX (B, T), parameter gradients)."""
        h_last = cache["h_last"]                            # (H, B)
        H, B = h_last.shape
        dw = (h_last @ dlogits)[:, None]
        db = np.array([dlogits.sum()])
        T = cache["T"]
        dHs = np.zeros((T, H, B))
        dHs[-1] = self.out.w[:, 0][:, None] * dlogits[None, :]
        dXf, dW = self.lstm.backward(dHs, cache["lstm"])
        grads = {"lstm.W": dW, "out.w": dw, "out.b": db}
        return dXf[:, 0, :].T, grads

    def params(self) -> dict[str, np.ndarray]:
        return {"lstm.W": self.lstm.W, "out.w": self.out.w, "out.b": self.out.b}


def get_param_vector(net) -> np.ndarray:
    """Flatten parameters in sorted name order (testing helper)."""
    return np.concatenate([net.params()[k].ravel() for k in sorted(net.params())])


def set_param_vector(net, vec: np.ndarray) -> None:
    off = 0
    for k in sorted(net.params()):
        p = net.params()[k]
        p[...] = vec[off:off + p.size].reshape(p.shape)
        off += p.size


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for key in sorted(params):
            g = grads[key]
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[key] -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
