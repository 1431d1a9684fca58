"""Shared fixtures: the finite-difference gradient oracle and tiny models."""
from __future__ import annotations

import numpy as np
import pytest

import driftlab.autodiff as ad
from driftlab.agents import AgentParams
from driftlab.corpus import Vocab

FD_EPS = 1e-5
FD_RTOL = 1e-4
FD_ATOL = 1e-7


def numeric_grad(f, tensor, eps: float = FD_EPS) -> np.ndarray:
    """Central-difference gradient of scalar-valued f() w.r.t. one tensor.

    f must rebuild its forward pass from the tensors' current .data on every
    call; entries are perturbed in place and restored.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        with ad.no_grad():
            hi = float(f().data)
        flat[i] = orig - eps
        with ad.no_grad():
            lo = float(f().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def assert_grads_close(analytic: np.ndarray, numeric: np.ndarray, name: str,
                       rtol: float = FD_RTOL, atol: float = FD_ATOL) -> None:
    diff = np.abs(analytic - numeric)
    tol = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
    if (diff > tol).any():
        worst = np.unravel_index(np.argmax(diff - tol), diff.shape)
        raise AssertionError(
            f"gradient mismatch for {name} at {worst}: "
            f"analytic={analytic[worst]!r} numeric={numeric[worst]!r}")


def fd_check(f, params: dict, rtol: float = FD_RTOL, atol: float = FD_ATOL,
             expect_zero: tuple = ()) -> None:
    """Compare tape gradients of scalar f() to central differences.

    Parameters named in expect_zero must receive no gradient at all (their
    tape grad stays None and the numeric gradient must vanish too).
    """
    with ad.record() as tape:
        loss = f()
        ad.backward(loss, tape)
    analytic = {k: ad.grad_of(t).copy() for k, t in params.items()}
    for k, t in params.items():
        if k in expect_zero and t.grad is not None:
            raise AssertionError(f"{k} unexpectedly received a tape gradient")
        t.grad = None
    for k, t in params.items():
        assert_grads_close(analytic[k], numeric_grad(f, t), k, rtol, atol)


def word_vocab(n: int, prefix: str = "w") -> Vocab:
    return Vocab([f"{prefix}{i}" for i in range(n)])


@pytest.fixture
def tiny_agent():
    def make(v_in: int = 5, v_out: int = 6, emb: int = 3, hidden: int = 4,
             seed: int = 0) -> AgentParams:
        return AgentParams.init(word_vocab(v_in, "s"), word_vocab(v_out, "p"),
                                emb, hidden, np.random.default_rng(seed))
    return make
