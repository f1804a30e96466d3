import numpy as np
import pytest

from lifelong_metric import LabeledDataset


def scalar_bilinear(M, x, y):
    total = 0.0
    for a in range(len(x)):
        for b in range(len(y)):
            total += x[a] * M[a][b] * y[b]
    return total


def scalar_triple_product(A, B, C):
    """A @ B @ C by explicit loops."""
    n, p = len(A), len(A[0])
    q, r = len(B[0]), len(C[0])
    out = [[0.0] * r for _ in range(n)]
    for i in range(n):
        for l in range(r):
            s = 0.0
            for j in range(p):
                for k in range(q):
                    s += A[i][j] * B[j][k] * C[k][l]
            out[i][l] = s
    return np.array(out)


def central_diff(f, X, h=1e-6):
    """Entrywise central finite-difference gradient of scalar ``f`` at matrix ``X``."""
    G = np.zeros_like(X, dtype=float)
    for idx in np.ndindex(X.shape):
        Xp = X.astype(float).copy()
        Xm = X.astype(float).copy()
        Xp[idx] += h
        Xm[idx] -= h
        G[idx] = (f(Xp) - f(Xm)) / (2 * h)
    return G


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def blobs(n_per_class=20, d_hat=4, classes=2, spread=3.0, seed=0, task_id="blobs"):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for c in range(classes):
        center = rng.normal(size=d_hat) * spread
        X.append(center + rng.normal(size=(n_per_class, d_hat)))
        y.append(np.full(n_per_class, c))
    return LabeledDataset(np.vstack(X), np.concatenate(y), task_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail=""):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def record_skip(number, title, reason):
    line = f"criterion {number:>2} SKIP  {title}  ({reason})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
