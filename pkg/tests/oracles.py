"""Independent slow reference implementations used by the tests."""
import itertools
import math

import numpy as np


def sinr_direct_sum(actions, gains, noise_w):
    """Leader SINRs by explicit summation over every (AP, leader) link."""
    n_aps, n_leaders, _ = gains.shape
    out = []
    for n in range(n_leaders):
        m = actions[n].subband
        p_n = 10 ** ((actions[n].power_dbm - 30) / 10)
        signal = 0.0
        for k in actions[n].ap_subset:
            signal += p_n * gains[k, n, m]
        interference = 0.0
        for i in range(n_aps):
            for j in range(n_leaders):
                if j == n:
                    continue
                rho = 1.0 if (i in actions[j].ap_subset and actions[j].subband == m) else 0.0
                p_ij = 10 ** ((actions[j].power_dbm - 30) / 10)
                interference += rho * p_ij * gains[i, n, m]
        out.append(signal / (interference + noise_w))
    return np.array(out)


def best_sum_rate(aps, gains, noise_w, bandwidth_hz, levels_dbm, n_subbands):
    """Enumerate every joint (sub-band, power) profile with fixed serving APs."""
    n = len(aps)
    levels_w = [10 ** ((p - 30) / 10) for p in levels_dbm]
    best, arg = -math.inf, None
    per = [(m, p) for m in range(n_subbands) for p in range(len(levels_w))]
    for profile in itertools.product(per, repeat=n):
        total = 0.0
        for r in range(n):
            m_r, p_r = profile[r]
            sig = levels_w[p_r] * gains[aps[r], r, m_r]
            intf = sum(
                levels_w[profile[j][1]] * gains[aps[j], r, m_r]
                for j in range(n) if j != r and profile[j][0] == m_r
            )
            total += bandwidth_hz * math.log2(1 + sig / (intf + noise_w))
        if total > best:
            best, arg = total, profile
    return best, arg


def numeric_gradients(net, states, actions, targets, h=1e-5):
    """Central finite differences of the mean squared TD loss."""
    def loss():
        q = net.forward(states)
        return float(np.mean((q[np.arange(len(actions)), actions] - targets) ** 2))

    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = loss()
            p[i] = old - h
            down = loss()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads
