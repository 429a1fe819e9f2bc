"""Independent scalar-level reference implementations used only by tests.

Plain Python loops and the math module; no numpy linear algebra and nothing
imported from moldgnn.
"""

import math


def matmul_loops(a, b):
    n, k, m = len(a), len(b), len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def gcn_scalar(a, w, identity_features=False):
    """ReLU(D^-1/2 (A+I) D^-1/2 Z W) with Z = A (or I), written out entry by entry."""
    n = len(a)
    a_hat = [[a[i][j] + (1.0 if i == j else 0.0) for j in range(n)] for i in range(n)]
    deg = [sum(a_hat[i]) for i in range(n)]
    filt = [[a_hat[i][j] / math.sqrt(deg[i]) / math.sqrt(deg[j]) for j in range(n)] for i in range(n)]
    z = [[(1.0 if i == j else 0.0) for j in range(n)] for i in range(n)] if identity_features else a
    fz = [[sum(filt[i][t] * z[t][j] for t in range(n)) for j in range(n)] for i in range(n)]
    f = len(w[0])
    out = [[sum(fz[i][t] * w[t][j] for t in range(n)) for j in range(f)] for i in range(n)]
    return [[max(v, 0.0) for v in row] for row in out]


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def lstm_scalar(x, h, c, weights, biases):
    """One LSTM step; weights[g] is F_l rows over the concatenation [h, x]."""
    hx = list(h) + list(x)
    fl = len(h)

    def gate(g):
        return [sum(weights[g][r][k] * hx[k] for k in range(len(hx))) + biases[g][r] for r in range(fl)]

    f = [_sig(v) for v in gate("f")]
    i = [_sig(v) for v in gate("i")]
    ct = [math.tanh(v) for v in gate("c")]
    o = [_sig(v) for v in gate("o")]
    c_new = [f[r] * c[r] + i[r] * ct[r] for r in range(fl)]
    h_new = [o[r] * math.tanh(c_new[r]) for r in range(fl)]
    return h_new, c_new


def upper_mse_loops(p, t):
    n = len(p)
    vals = [(p[i][j] - t[i][j]) ** 2 for i in range(n) for j in range(i + 1, n)]
    return sum(vals) / len(vals)


def distance(p, q):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))


def adam_scalar(theta, grad_fn, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return theta
