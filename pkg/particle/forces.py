"""
Сила выравнивания F_a[μ^N](x_i, v_i) = (1/N) Σ_j φ̄(|x_j − x_i|)(v_j − v_i)
"""

import numpy as np
from scipy.spatial.distance import cdist

from core.exceptions import ParticleIndexError
from core.weights import CommWeight

# строк матрицы расстояний на один блок
ROW_BLOCK = 512


def alignment_forces(x: np.ndarray, v: np.ndarray, w: CommWeight, block: int = ROW_BLOCK) -> np.ndarray:
    """Силы на всех частицах; прямая сумма O(N²) блоками строк"""
    N = len(x)
    if w.is_constant:
        return w.phi_M * (v.mean(axis=0) - v)

    forces = np.empty_like(v)
    for start in range(0, N, block):
        rows = slice(start, min(start + block, N))
        weights = w(cdist(x[rows], x))
        forces[rows] = (weights @ v - weights.sum(axis=1)[:, None] * v[rows]) / N
    return forces


def flocking_forces(ens, w: CommWeight) -> np.ndarray:
    return alignment_forces(ens.x, ens.v, w)


def flocking_force(ens, w: CommWeight, i: int) -> np.ndarray:
    """Сила на одну частицу, O(N)"""
    if not 0 <= i < ens.N:
        raise ParticleIndexError(f"Индекс частицы {i} вне диапазона [0, {ens.N})")
    dist = np.linalg.norm(ens.x - ens.x[i], axis=1)
    weights = w(dist)
    return (weights[:, None] * (ens.v - ens.v[i])).sum(axis=0) / ens.N
