import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cbu import _accel, kernels

ints = hnp.arrays(np.int64, st.integers(0, 40), elements=st.integers(-5, 5))


@settings(max_examples=150, deadline=None)
@given(ints, ints)
def test_pair_counts_paths_agree(pos, neg):
    expect = (int(np.sum(pos[:, None] > neg[None, :])), int(np.sum(pos[:, None] == neg[None, :])))
    assert kernels.pair_counts_numpy(pos, neg) == expect
    gt, eq = kernels.pair_counts_numba(pos, neg)
    assert (int(gt), int(eq)) == expect


@settings(max_examples=150, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 60), elements=st.integers(-4, 4).map(float)))
def test_average_ranks_paths_agree(x):
    a = kernels.average_ranks_numpy(x)
    b = kernels.average_ranks_numba(x)
    assert np.array_equal(a, b)
    assert a.sum() == x.size * (x.size + 1) / 2


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.integers(1, 30), st.integers(0, 2 ** 32 - 1))
def test_resample_errors_paths_agree(size, n, seed):
    rng = np.random.default_rng(seed)
    pool = rng.random(size)
    idx = rng.integers(0, size, size=(17, n))
    a = kernels.resample_errors_numpy(pool, idx, pool.mean(), 2.0)
    b = kernels.resample_errors_numba(pool, idx, pool.mean(), 2.0)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_dispatch_uses_numba_here():
    assert _accel.USE_NUMBA
    assert _accel.backend_name() == "numba"


@pytest.mark.parametrize("flag", ["1", "true"])
def test_env_flag_selects_numpy(flag):
    code = ("import numpy as np, cbu, cbu.kernels as k; "
            "assert cbu.backend_name() == 'numpy'; "
            "assert k.pair_counts(np.array([2, 1]), np.array([1])) == (1, 1); "
            "print(k.average_ranks(np.array([3.0, 1.0, 1.0])).tolist())")
    env = dict(os.environ, CBU_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "[3.0, 1.5, 1.5]"


def test_benchmark_script_runs():
    root = os.path.dirname(os.path.dirname(__file__))
    out = subprocess.run([sys.executable, os.path.join(root, "benchmarks", "bench_kernels.py"), "--quick", "--repeat", "1"],
                         capture_output=True, text=True, check=True)
    assert "pair_counts" in out.stdout and "speedup" in out.stdout
