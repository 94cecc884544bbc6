import numpy as np
import pytest

from labelaug import engine
from labelaug.engine import Tape, Tensor


def finite_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x (float64, x modified in place)."""
    assert x.dtype == np.float64
    grad = np.zeros_like(x)
    flat, gflat = x.ravel(), grad.ravel()
    for i in range(x.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.abs(numeric).max()), 1e-12)
    return float(np.abs(analytic - numeric).max()) / scale


def projection_loss(out: Tensor, proj: np.ndarray) -> Tensor:
    """Scalar loss sum(out * proj) giving a nontrivial upstream gradient."""
    return engine.sum_all(engine.mul(out, Tensor(proj)))


def check_grads(build, arrays: dict[str, np.ndarray], h: float = 1e-5) -> float:
    """Compare reverse-mode and finite-difference gradients.

    ``build`` maps {name: Tensor} to a scalar loss Tensor; ``arrays`` hold
    float64 leaf values.  Returns the worst relative error over all leaves.
    """
    tape = Tape()
    leaves = {name: tape.watch(Tensor(arr.copy())) for name, arr in arrays.items()}
    loss = build(leaves)
    engine.backward(loss, list(leaves.values()))

    worst = 0.0
    for name, arr in arrays.items():
        def forward() -> float:
            ts = {n: Tensor(a if n != name else arr) for n, a in arrays.items()}
            return float(build(ts).data)

        numeric = finite_difference(forward, arr, h)
        worst = max(worst, relative_error(leaves[name].grad, numeric))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
