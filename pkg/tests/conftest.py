import numpy as np
import pytest

from parloop.parse import parse_source

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def loop(body: str, arrays: str = "int a[n], int b[n], int c[n]", scalars: str = "",
         lower: str = "0", upper: str = "n"):
    """Build a loop from a C body; keeps the test cases readable."""
    return parse_source(
        f"void kernel(int n, {arrays}) {{\n{scalars}\n"
        f"for (int i = {lower}; i < {upper}; i++) {{\n{body}\n}}\n}}\n"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def grad_check(cfg, ids, mask, labels, dropout_seed=None, h=1e-6, widen=20.0):
    """Per-tensor relative error between backprop and central differences.

    Matrices are scaled by ``widen`` first: at the stock init scale attention is
    almost uniform and the query/key gradients drown in rounding noise.
    """
    from parloop.classifier.model import backward, cross_entropy, cross_entropy_grad, forward, init_params

    params = init_params(cfg)
    for p in params.values():
        if p.ndim == 2:
            p *= widen

    def drop():
        return None if dropout_seed is None else np.random.default_rng(dropout_seed)

    def loss():
        return cross_entropy(forward(params, cfg, ids, mask, rng=drop()), labels)

    logits, cache = forward(params, cfg, ids, mask, rng=drop(), keep_cache=True)
    grads = backward(params, cfg, cache, cross_entropy_grad(logits, labels))
    errors = {}
    for name, p in params.items():
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()
            p[idx] = old - h
            down = loss()
            p[idx] = old
            num[idx] = (up - down) / (2 * h)
        denom = np.linalg.norm(num) + np.linalg.norm(grads[name])
        # the key bias has an exactly zero gradient (softmax shift invariance); only noise is left
        errors[name] = 0.0 if denom < 1e-7 else float(np.linalg.norm(num - grads[name]) / denom)
    return errors


def toy_batch(rng, n=6, length=8, vocab=20):
    """Random ids with ragged padding; row k keeps ``length - k % 3`` real tokens."""
    from parloop.tokenizer import CLS, N_SPECIAL, PAD, SEP

    ids = np.full((n, length), PAD, dtype=np.int64)
    mask = np.zeros((n, length), dtype=np.int8)
    for k in range(n):
        t = length - k % 3
        ids[k, 0] = CLS
        ids[k, 1:t - 1] = rng.integers(N_SPECIAL, vocab, t - 2)
        ids[k, t - 1] = SEP
        mask[k, :t] = 1
    labels = rng.integers(0, 2, n)
    return ids, mask, labels
