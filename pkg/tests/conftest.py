"""Shared fixtures: repository root on sys.path and seeded random Hermitian systems."""
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

CONFIG_DIR = ROOT / "configs"


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 0.5) -> np.ndarray:
    a = scale * (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
    return (a + a.conj().T) / 2.0


def random_nondegenerate_h0(rng: np.random.Generator, dim: int, min_gap: float = 0.2) -> np.ndarray:
    """Hermitian H0 whose sorted eigenvalues are at least min_gap apart."""
    gaps = min_gap + rng.random(dim - 1)
    energies = np.concatenate([[0.0], np.cumsum(gaps)]) - 1.0
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
    h0 = (q * energies) @ q.conj().T
    return (h0 + h0.conj().T) / 2.0


def random_unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR
