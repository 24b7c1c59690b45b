"""Independent reference implementations used only to generate expected values.

Everything here is deliberately naive (scalar loops, finite differences)
and shares no code path with the library.
"""

import numpy as np


def naive_forward(widths, activations, w, x):
    """Evaluate the network on one sample with plain Python loops."""
    pos = 0
    a = [float(v) for v in x]
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        z = []
        for o in range(fan_out):
            s = 0.0
            for i in range(fan_in):
                s += w[pos + o * fan_in + i] * a[i]
            z.append(s)
        pos += fan_in * fan_out
        for o in range(fan_out):
            z[o] += w[pos + o]
        pos += fan_out
        if activations[layer] == "relu":
            a = [v if v > 0.0 else 0.0 for v in z]
        else:
            a = z
    return np.array(a)


def fd_jacobian(f, w, out_dim, step=1e-5):
    """Central finite differences of a vector function f: R^d -> R^out_dim."""
    d = w.shape[0]
    J = np.empty((out_dim, d))
    for j in range(d):
        wp = w.copy()
        wm = w.copy()
        wp[j] += step
        wm[j] -= step
        J[:, j] = (f(wp) - f(wm)) / (2.0 * step)
    return J


def fd_gradient(f, w, step=1e-5):
    """Central finite differences of a scalar function f: R^d -> R."""
    d = w.shape[0]
    g = np.empty(d)
    for j in range(d):
        wp = w.copy()
        wm = w.copy()
        wp[j] += step
        wm[j] -= step
        g[j] = (f(wp) - f(wm)) / (2.0 * step)
    return g


def random_relu_net(rng, max_widths=(4, 6, 5, 3), min_layers=2):
    """Small random architecture + params for derivative checks (d <= 50ish)."""
    n_layers = rng.integers(min_layers, len(max_widths) + 1)
    widths = tuple(int(rng.integers(1, m + 1)) for m in max_widths[:n_layers])
    acts = tuple(
        rng.choice(["relu", "identity"]) for _ in range(n_layers - 1)
    )
    acts = acts[:-1] + ("identity",)
    d = sum(i * o + o for i, o in zip(widths[:-1], widths[1:]))
    w = rng.standard_normal(d)
    return widths, acts, w
