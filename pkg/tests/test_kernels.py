import os
import subprocess
import sys

import numpy as np
import pytest

from dflab._kernels import BACKEND, available_backends

BACKENDS = available_backends()

pytestmark = pytest.mark.skipif(
    "compiled" not in BACKENDS,
    reason="compiled extension not built; nothing to compare against",
)


def _split_instances():
    rng = np.random.default_rng(0)
    cases = []
    for n in (2, 3, 10, 64, 257):
        xs = np.sort(rng.standard_normal(n))
        ys = rng.standard_normal(n)
        cases.append((xs, ys))
    # heavy ties, including fully tied
    xs = np.sort(rng.integers(0, 4, size=40).astype(np.float64))
    cases.append((xs, rng.standard_normal(40)))
    cases.append((np.full(12, 3.0), rng.standard_normal(12)))
    cases.append((np.array([1.0]), np.array([0.5])))
    return cases


def test_tree_split_scan_backends_agree():
    pure = BACKENDS["pure"].tree_split_scan
    fast = BACKENDS["compiled"].tree_split_scan
    for xs, ys in _split_instances():
        cut_p, sse_p = pure(xs, ys)
        cut_f, sse_f = fast(np.ascontiguousarray(xs), np.ascontiguousarray(ys))
        if np.isnan(cut_p):
            assert np.isnan(cut_f)
            assert sse_f == np.inf
        else:
            assert cut_f == pytest.approx(cut_p, abs=1e-12)
            assert sse_f == pytest.approx(sse_p, rel=1e-10, abs=1e-10)


def _sweep_instances():
    rng = np.random.default_rng(1)
    cases = []
    for n, m, ties in [(20, 1, False), (50, 3, False), (80, 5, True),
                       (30, 2, True)]:
        X = rng.standard_normal((n, 4))
        if ties:
            X = np.round(X * 2.0) / 2.0
        y = rng.standard_normal(n)
        B = np.column_stack([np.ones(n)] +
                            [np.maximum(X[:, j % 4] - 0.1 * j, 0.0)
                             for j in range(1, m)])
        Q, _ = np.linalg.qr(B)
        h = np.maximum(X[:, 0] + 0.3, 0.0) if ties else np.ones(n)
        xv = np.ascontiguousarray(X[:, 1])
        order = np.argsort(-xv, kind="stable").astype(np.int64)
        cases.append((np.ascontiguousarray(Q), Q.T @ y, y, h, xv, order))
    return cases


@pytest.mark.parametrize("stride", [1, 3])
def test_mars_pair_sweep_backends_agree(stride):
    pure = BACKENDS["pure"].mars_pair_sweep
    fast = BACKENDS["compiled"].mars_pair_sweep
    for Q, qty, y, h, xv, order in _sweep_instances():
        out_p = pure(Q, qty, y, h, xv, order, 1e-10, stride)
        out_f = fast(Q, qty, y, h, xv, order, 1e-10, stride)
        gain_p, knot_p, lin_p = out_p
        gain_f, knot_f, lin_f = out_f
        assert gain_f == pytest.approx(gain_p, rel=1e-9, abs=1e-9)
        if np.isnan(knot_p):
            assert np.isnan(knot_f)
        else:
            assert knot_f == pytest.approx(knot_p, abs=1e-12)
        assert lin_f == pytest.approx(lin_p, rel=1e-9, abs=1e-9)


def test_mars_pair_sweep_empty_support_sentinel():
    n = 16
    Q = np.full((n, 1), 1.0 / np.sqrt(n))
    y = np.linspace(-1, 1, n)
    h = np.zeros(n)
    xv = np.linspace(0, 1, n)
    order = np.argsort(-xv, kind="stable").astype(np.int64)
    for impl in BACKENDS.values():
        gain, knot, lin = impl.mars_pair_sweep(Q, Q.T @ y, y, h, xv, order,
                                               1e-10, 1)
        assert gain == -1.0
        assert np.isnan(knot)
        assert lin == 0.0


def test_env_var_forces_pure_backend():
    env = dict(os.environ, DFLAB_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "from dflab._kernels import BACKEND; print(BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == "pure"


def test_default_backend_is_compiled_when_built():
    if os.environ.get("DFLAB_PURE"):
        pytest.skip("pure backend forced via DFLAB_PURE")
    assert BACKEND == "compiled"
