"""Pure-numpy GRU recurrence kernels (fallback for the compiled extension).

Both backends share one contract:

    gru_forward(gx, u, mask, h0) -> (H, Z, R, N)
    gru_backward(dH, u, mask, h0, H, Z, R, N) -> (dGX, dU, dh0)

``gx`` holds the precomputed input projections ``X @ W + b`` laid out as
``[T, B, 3h]`` with gate blocks ``[update | reset | candidate]``. ``mask`` is
``[T, B]`` with 1.0 on valid steps; a masked step carries the state through.
"""

import numpy as np


def _sigmoid(a):
    return 0.5 * (np.tanh(0.5 * a) + 1.0)


def gru_forward(gx, u, mask, h0):
    T, B, three_h = gx.shape
    h = three_h // 3
    u_zr = u[:, : 2 * h]
    u_n = u[:, 2 * h :]
    H = np.empty((T, B, h))
    Z = np.empty((T, B, h))
    R = np.empty((T, B, h))
    N = np.empty((T, B, h))
    hp = h0
    for t in range(T):
        g = gx[t]
        zr = _sigmoid(g[:, : 2 * h] + hp @ u_zr)
        z = zr[:, :h]
        r = zr[:, h:]
        n = np.tanh(g[:, 2 * h :] + (r * hp) @ u_n)
        m = mask[t][:, None]
        hn = hp + m * z * (n - hp)
        Z[t] = z
        R[t] = r
        N[t] = n
        H[t] = hn
        hp = hn
    return H, Z, R, N


def gru_backward(dH, u, mask, h0, H, Z, R, N):
    T, B, h = H.shape
    u_zr = u[:, : 2 * h]
    u_n = u[:, 2 * h :]
    dGX = np.empty((T, B, 3 * h))
    dU = np.zeros_like(u)
    carry = np.zeros((B, h))
    for t in range(T - 1, -1, -1):
        hp = H[t - 1] if t > 0 else h0
        z = Z[t]
        r = R[t]
        n = N[t]
        m = mask[t][:, None]
        g = dH[t] + carry
        dhn = m * g
        dhp = g - dhn * z
        dz = dhn * (n - hp)
        dan = dhn * z * (1.0 - n * n)
        drh = dan @ u_n.T
        rh = r * hp
        dhp += drh * r
        da_z = dz * z * (1.0 - z)
        da_r = drh * hp * r * (1.0 - r)
        da_zr = np.concatenate([da_z, da_r], axis=1)
        dU[:, : 2 * h] += hp.T @ da_zr
        dU[:, 2 * h :] += rh.T @ dan
        dhp += da_zr @ u_zr.T
        dGX[t, :, : 2 * h] = da_zr
        dGX[t, :, 2 * h :] = dan
        carry = dhp
    return dGX, dU, carry
