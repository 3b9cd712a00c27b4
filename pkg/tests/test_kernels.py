import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from mftsim import BACKEND
from mftsim.kernels import set_threads
from mftsim.wavefunction import amplitude_batch, velocity_batch

_PROBE_SCRIPT = textwrap.dedent("""\
    import numpy as np
    from mftsim import BACKEND
    from mftsim.scenario import load_bundled
    from mftsim.wavefunction import amplitude_batch, velocity_batch

    state = load_bundled("entangled_pair").state
    g = np.linspace(-1.5, 1.5, 40)
    Xs = np.column_stack([np.repeat(g, 40), np.tile(g, 40)])
    T = np.array([0.7, 0.3])
    lm, ph, rel = amplitude_batch(state, Xs, T)
    v, vrel = velocity_batch(state, Xs, T)
    np.savez(%r, backend=BACKEND, lm=lm, ph=ph, rel=rel, v=v)
""")


def _probe_batch(pair_state):
    g = np.linspace(-1.5, 1.5, 40)
    Xs = np.column_stack([np.repeat(g, 40), np.tile(g, 40)])
    T = np.array([0.7, 0.3])
    return Xs, T


def test_backend_flag_value():
    assert BACKEND in ("numba", "numpy")
    assert BACKEND == "numba"  # numba is a hard dependency of the package


def test_env_flag_selects_numpy_backend(tmp_path):
    out = tmp_path / "numpy.npz"
    env = dict(os.environ, MFTSIM_DISABLE_NUMBA="1")
    subprocess.run([sys.executable, "-c", _PROBE_SCRIPT % str(out)],
                   check=True, env=env)
    assert str(np.load(out)["backend"]) == "numpy"


def test_backends_agree(pair_state, tmp_path):
    out = tmp_path / "numpy.npz"
    env = dict(os.environ, MFTSIM_DISABLE_NUMBA="1")
    subprocess.run([sys.executable, "-c", _PROBE_SCRIPT % str(out)],
                   check=True, env=env)
    ref = np.load(out)

    Xs, T = _probe_batch(pair_state)
    lm, ph, rel = amplitude_batch(pair_state, Xs, T)
    v, _ = velocity_batch(pair_state, Xs, T)

    assert np.max(np.abs(lm - ref["lm"])) < 1e-9
    # compare phases on the circle; branch conventions may differ
    assert np.max(np.abs(np.angle(np.exp(1j * (ph - ref["ph"]))))) < 1e-9
    assert np.max(np.abs(v - ref["v"])) < 1e-9


def test_same_process_bitwise_repeatable(pair_state):
    Xs, T = _probe_batch(pair_state)
    a = amplitude_batch(pair_state, Xs, T)
    b = amplitude_batch(pair_state, Xs, T)
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()


@pytest.mark.skipif(BACKEND != "numba", reason="thread pool is numba-only")
def test_thread_count_does_not_change_bits(pair_state):
    Xs, T = _probe_batch(pair_state)
    try:
        set_threads(1)
        one = amplitude_batch(pair_state, Xs, T)
        v1, _ = velocity_batch(pair_state, Xs, T)
        set_threads(4)
        four = amplitude_batch(pair_state, Xs, T)
        v4, _ = velocity_batch(pair_state, Xs, T)
    finally:
        set_threads(0)
    for x, y in zip(one, four):
        assert x.tobytes() == y.tobytes()
    assert v1.tobytes() == v4.tobytes()


def test_set_threads_caps_at_pool_size():
    if BACKEND != "numba":
        pytest.skip("thread pool is numba-only")
    import numba

    assert set_threads(10 ** 6) <= numba.config.NUMBA_NUM_THREADS
