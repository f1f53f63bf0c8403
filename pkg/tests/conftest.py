import numpy as np
import pytest

from emod.autodiff import Tensor, no_grad


def central_difference(f, arrays, step=1e-5):
    """Finite-difference gradients of scalar ``f(*arrays)`` (arrays mutated in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = f(*arrays)
            flat[i] = orig - step
            fm = f(*arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * step)
        grads.append(g)
    return grads


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else np.linalg.norm(a - b) / denom


def check_grad(fn, *arrays, step=1e-5):
    """Worst relative error between backward and central differences."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    fn(*leaves).backward()

    def scalar(*arrs):
        with no_grad():
            return fn(*[Tensor(a) for a in arrs]).item()

    numeric = central_difference(scalar, arrays, step)
    return max(rel_err(leaf.grad, n) for leaf, n in zip(leaves, numeric))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report, printed once at the end of the run
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str):
        _ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_ACCEPTANCE[number])
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
