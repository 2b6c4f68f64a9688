"""Tree-like space grid and matched Fourier grid.

The space interval at time index ``i`` has ``N_i = N0 + i`` increments of
length ``l`` centred at ``x0``; each increment holds ``N`` space steps. Moving
from ``i`` to ``i + 1`` widens the interval by ``l/2`` on each side, so node
``k`` of layer ``i`` is node ``k + N/2`` of layer ``i + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    """Invalid grid or partition parameters."""


@dataclass(frozen=True)
class TimePartition:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise GridError("partition: need at least two time nodes")
        if nodes[0] != 0.0:
            raise GridError("partition: nodes[0] must be 0")
        if np.any(np.diff(nodes) <= 0):
            raise GridError("partition: nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, T: float, n: int) -> "TimePartition":
        if n < 1:
            raise GridError(f"n: number of time steps must be >= 1, got {n}")
        if not T > 0:
            raise GridError(f"T: horizon must be positive, got {T}")
        return cls(np.linspace(0.0, T, n + 1))

    @property
    def n(self) -> int:
        return self.nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @cached_property
    def deltas(self) -> np.ndarray:
        return np.diff(self.nodes)


@dataclass(frozen=True)
class GridParams:
    """``x0`` centre, ``l`` increment length, ``N`` steps per increment, ``N0`` initial increments."""

    x0: float
    l: float
    N: int
    N0: int = 1

    def __post_init__(self):
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 2 and self.N % 2 == 0):
            raise GridError(f"N: must be an even integer >= 2, got {self.N!r}")
        if not (math.isfinite(self.l) and self.l > 0):
            raise GridError(f"l: increment length must be positive, got {self.l!r}")
        if not (isinstance(self.N0, (int, np.integer)) and self.N0 >= 0):
            raise GridError(f"N0: must be a non-negative integer, got {self.N0!r}")
        if not math.isfinite(self.x0):
            raise GridError(f"x0: must be finite, got {self.x0!r}")

    @property
    def dx(self) -> float:
        return self.l / self.N

    @property
    def L(self) -> float:
        """Fourier window width from the Nyquist relation ``L * l = 2 pi N``."""
        return 2.0 * math.pi * self.N / self.l


@dataclass(frozen=True)
class AlternativeGrid:
    params: GridParams
    partition: TimePartition

    @property
    def n(self) -> int:
        return self.partition.n

    def _check_index(self, i: int, lo: int = 0) -> None:
        if not lo <= i <= self.n:
            raise IndexError(f"time index {i} outside [{lo}, {self.n}]")

    def increments(self, i: int) -> int:
        return self.params.N0 + i

    def size(self, i: int) -> int:
        """Number of space nodes at time index ``i``."""
        return self.increments(i) * self.params.N + 1

    def space_node(self, i: int, k: int) -> float:
        p = self.params
        return p.x0 + (k - self.increments(i) * p.N // 2) * p.dx

    def space_nodes(self, i: int) -> np.ndarray:
        self._check_index(i)
        p = self.params
        # x0 - N_i*l/2 + k*dx written with the integer offset from the centre,
        # which is the same for (i, k) and (i+1, k+N/2): the intergrid relation
        # then holds bitwise
        offset = np.arange(self.size(i)) - self.increments(i) * p.N // 2
        return p.x0 + offset * p.dx

    def interval(self, i: int) -> tuple[float, float]:
        nodes = self.space_nodes(i)
        return float(nodes[0]), float(nodes[-1])

    def fourier_nodes(self, i: int) -> np.ndarray:
        self._check_index(i, lo=1)
        return fourier_grid(self.params.L, self.increments(i) * self.params.N)


def fourier_grid(L: float, M: int) -> np.ndarray:
    """``M + 1`` equispaced frequencies from ``-L/2`` to ``L/2``."""
    k = np.arange(M + 1)
    return -L / 2 + k * (L / M)


def build_grid(params: GridParams, partition: TimePartition) -> AlternativeGrid:
    if not isinstance(partition, TimePartition):
        raise GridError("partition: expected a TimePartition")
    return AlternativeGrid(params, partition)
