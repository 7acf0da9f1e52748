"""Recurrent cells with exact backpropagation through time.

Everything is float64 and batched as (batch, time, features) with equal
lengths within a call; the network layer handles variable lengths by making
batch-of-one calls. Gate activations use the logistic function via
scipy.special.expit, and all gradients are derived by hand so they can be
validated against central finite differences.

LSTM gates follow the peephole form: the input and forget gates peek at the
previous cell state c_{t-1}, the output gate peeks at the freshly updated
c_t, and the peephole weights are diagonal (stored as vectors).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-limit, limit, size=shape)


class LstmCell:
    """Peephole LSTM. Combined weights use gate order [i, f, g, o] where g is
    the cell candidate: wx is (input, 4H), wh is (H, 4H), peepholes are (H,)."""

    def __init__(self, input_size, hidden_size, rng=None, prefix="lstm"):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.prefix = prefix
        H = hidden_size
        if rng is None:
            self.wx = np.zeros((input_size, 4 * H))
            self.wh = np.zeros((H, 4 * H))
            self.b = np.zeros(4 * H)
            self.pi = np.zeros(H)
            self.pf = np.zeros(H)
            self.po = np.zeros(H)
        else:
            self.wx = glorot(rng, (input_size, 4 * H))
            self.wh = glorot(rng, (H, 4 * H))
            self.b = np.zeros(4 * H)
            # a forget gate biased open trains far more reliably
            self.b[H:2 * H] = 1.0
            self.pi = rng.uniform(-0.1, 0.1, H)
            self.pf = rng.uniform(-0.1, 0.1, H)
            self.po = rng.uniform(-0.1, 0.1, H)

    def params(self):
        p = self.prefix
        return {p + ".wx": self.wx, p + ".wh": self.wh, p + ".b": self.b,
                p + ".pi": self.pi, p + ".pf": self.pf, p + ".po": self.po}

    def forward(self, x):
        B, T, _ = x.shape
        H = self.hidden_size
        xp = x.reshape(B * T, -1) @ self.wx
        xp = xp.reshape(B, T, 4 * H) + self.b
        h = np.empty((B, T, H))
        gi = np.empty((B, T, H))
        gf = np.empty((B, T, H))
        gg = np.empty((B, T, H))
        go = np.empty((B, T, H))
        cs = np.empty((B, T, H))
        tc = np.empty((B, T, H))
        hp = np.zeros((B, H))
        cp = np.zeros((B, H))
        for t in range(T):
            a = xp[:, t, :] + hp @ self.wh
            ai = a[:, :H] + self.pi * cp
            af = a[:, H:2 * H] + self.pf * cp
            i = expit(ai)
            f = expit(af)
            g = np.tanh(a[:, 2 * H:3 * H])
            c = f * cp + i * g
            o = expit(a[:, 3 * H:] + self.po * c)
            tch = np.tanh(c)
            ht = o * tch
            gi[:, t] = i
            gf[:, t] = f
            gg[:, t] = g
            go[:, t] = o
            cs[:, t] = c
            tc[:, t] = tch
            h[:, t] = ht
            hp = ht
            cp = c
        cache = (x, h, gi, gf, gg, go, cs, tc)
        return h, cache

    def backward(self, dh, cache):
        x, h, gi, gf, gg, go, cs, tc = cache
        B, T, H = h.shape
        cprev = np.concatenate([np.zeros((B, 1, H)), cs[:, :-1]], axis=1)
        hprev = np.concatenate([np.zeros((B, 1, H)), h[:, :-1]], axis=1)
        da = np.empty((B, T, 4 * H))
        dhp = np.zeros((B, H))
        dcp = np.zeros((B, H))
        wh_T = self.wh.T
        for t in range(T - 1, -1, -1):
            i, f, g, o = gi[:, t], gf[:, t], gg[:, t], go[:, t]
            dht = dh[:, t] + dhp
            do = dht * tc[:, t]
            dao = do * o * (1.0 - o)
            dc = dht * o * (1.0 - tc[:, t] ** 2) + dcp + dao * self.po
            dai = dc * g * i * (1.0 - i)
            daf = dc * cprev[:, t] * f * (1.0 - f)
            dag = dc * i * (1.0 - g ** 2)
            dcp = dc * f + dai * self.pi + daf * self.pf
            da[:, t, :H] = dai
            da[:, t, H:2 * H] = daf
            da[:, t, 2 * H:3 * H] = dag
            da[:, t, 3 * H:] = dao
            dhp = da[:, t] @ wh_T
        flat_da = da.reshape(B * T, 4 * H)
        grads = {
            self.prefix + ".wx": x.reshape(B * T, -1).T @ flat_da,
            self.prefix + ".wh": hprev.reshape(B * T, H).T @ flat_da,
            self.prefix + ".b": flat_da.sum(axis=0),
            self.prefix + ".pi": (da[:, :, :H] * cprev).sum(axis=(0, 1)),
            self.prefix + ".pf": (da[:, :, H:2 * H] * cprev).sum(axis=(0, 1)),
            self.prefix + ".po": (da[:, :, 3 * H:] * cs).sum(axis=(0, 1)),
        }
        dx = (flat_da @ self.wx.T).reshape(x.shape)
        return dx, grads


class GruCell:
    """Standard GRU. Combined update/reset weights use gate order [z, r]:
    wx is (input, 3H) with the candidate block last, wh_zr is (H, 2H) and
    wh_n is (H, H) applied to r * h_{t-1}."""

    def __init__(self, input_size, hidden_size, rng=None, prefix="gru"):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.prefix = prefix
        H = hidden_size
        if rng is None:
            self.wx = np.zeros((input_size, 3 * H))
            self.wh_zr = np.zeros((H, 2 * H))
            self.wh_n = np.zeros((H, H))
        else:
            self.wx = glorot(rng, (input_size, 3 * H))
            self.wh_zr = glorot(rng, (H, 2 * H))
            self.wh_n = glorot(rng, (H, H))
        self.b = np.zeros(3 * H)

    def params(self):
        p = self.prefix
        return {p + ".wx": self.wx, p + ".wh_zr": self.wh_zr,
                p + ".wh_n": self.wh_n, p + ".b": self.b}

    def forward(self, x):
        B, T, _ = x.shape
        H = self.hidden_size
        xp = x.reshape(B * T, -1) @ self.wx
        xp = xp.reshape(B, T, 3 * H) + self.b
        h = np.empty((B, T, H))
        gz = np.empty((B, T, H))
        gr = np.empty((B, T, H))
        gn = np.empty((B, T, H))
        rh = np.empty((B, T, H))
        hp = np.zeros((B, H))
        for t in range(T):
            azr = xp[:, t, :2 * H] + hp @ self.wh_zr
            z = expit(azr[:, :H])
            r = expit(azr[:, H:])
            rhp = r * hp
            n = np.tanh(xp[:, t, 2 * H:] + rhp @ self.wh_n)
            ht = (1.0 - z) * hp + z * n
            gz[:, t] = z
            gr[:, t] = r
            gn[:, t] = n
            rh[:, t] = rhp
            h[:, t] = ht
            hp = ht
        cache = (x, h, gz, gr, gn, rh)
        return h, cache

    def backward(self, dh, cache):
        x, h, gz, gr, gn, rh = cache
        B, T, H = h.shape
        hprev = np.concatenate([np.zeros((B, 1, H)), h[:, :-1]], axis=1)
        da_zr = np.empty((B, T, 2 * H))
        da_n = np.empty((B, T, H))
        dhp = np.zeros((B, H))
        wh_zr_T = self.wh_zr.T
        wh_n_T = self.wh_n.T
        for t in range(T - 1, -1, -1):
            z, r, n = gz[:, t], gr[:, t], gn[:, t]
            hp = hprev[:, t]
            dht = dh[:, t] + dhp
            dz = dht * (n - hp)
            daz = dz * z * (1.0 - z)
            dn = dht * z
            dan = dn * (1.0 - n ** 2)
            drh = dan @ wh_n_T
            dar = drh * hp * r * (1.0 - r)
            da_zr[:, t, :H] = daz
            da_zr[:, t, H:] = dar
            da_n[:, t] = dan
            dhp = dht * (1.0 - z) + drh * r + da_zr[:, t] @ wh_zr_T
        flat_zr = da_zr.reshape(B * T, 2 * H)
        flat_n = da_n.reshape(B * T, H)
        flat_all = np.concatenate([flat_zr, flat_n], axis=1)
        grads = {
            self.prefix + ".wx": x.reshape(B * T, -1).T @ flat_all,
            self.prefix + ".wh_zr": hprev.reshape(B * T, H).T @ flat_zr,
            self.prefix + ".wh_n": rh.reshape(B * T, H).T @ flat_n,
            self.prefix + ".b": flat_all.sum(axis=0),
        }
        dx = (flat_all @ self.wx.T).reshape(x.shape)
        return dx, grads


class UnidirectionalLayer:
    def __init__(self, cell):
        self.cell = cell
        self.output_size = cell.hidden_size

    def params(self):
        return self.cell.params()

    def forward(self, x):
        return self.cell.forward(x)

    def backward(self, dout, cache):
        return self.cell.backward(dout, cache)


class BidirectionalLayer:
    """Forward and backward cells; output row t is [h_t^f, h^b after seeing
    x_T .. x_t], so the last row pairs the full forward pass with the
    backward cell's first step."""

    def __init__(self, forward_cell, backward_cell):
        self.fwd = forward_cell
        self.bwd = backward_cell
        self.output_size = forward_cell.hidden_size + backward_cell.hidden_size

    def params(self):
        out = dict(self.fwd.params())
        out.update(self.bwd.params())
        return out

    def forward(self, x):
        hf, cache_f = self.fwd.forward(x)
        xr = np.ascontiguousarray(x[:, ::-1])
        hb_rev, cache_b = self.bwd.forward(xr)
        hb = hb_rev[:, ::-1]
        return np.concatenate([hf, hb], axis=2), (cache_f, cache_b)

    def backward(self, dout, cache):
        cache_f, cache_b = cache
        H = self.fwd.hidden_size
        dxf, grads_f = self.fwd.backward(np.ascontiguousarray(dout[:, :, :H]), cache_f)
        dxb_rev, grads_b = self.bwd.backward(
            np.ascontiguousarray(dout[:, ::-1, H:]), cache_b)
        grads_f.update(grads_b)
        return dxf + dxb_rev[:, ::-1], grads_f
