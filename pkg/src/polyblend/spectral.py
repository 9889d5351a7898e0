"""Cosine-spectral Neumann calculus on a cell-centered rectangular grid.

Fields are plain ``(nx, ny)`` float64 arrays, axis 0 along ``x``. Sample ``(i, j)``
sits at ``((i + 1/2) lx/nx, (j + 1/2) ly/ny)``, so the orthonormal DCT-II basis is
exactly the set of Neumann eigenfunctions ``cos(pi j x/lx) cos(pi k y/ly)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

ZERO_MEAN_RTOL = 1e-10


class GridMismatchError(ValueError):
    pass


class NonZeroMeanError(ValueError):
    pass


class SingularSymbolError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("nx and ny must be integers")
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"need nx, ny >= 8, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0 and np.isfinite(self.lx) and np.isfinite(self.ly)):
            raise ValueError(f"need lx, ly > 0, got {self.lx}, {self.ly}")
        kx = np.pi * np.arange(self.nx) / self.lx
        ky = np.pi * np.arange(self.ny) / self.ly
        lam = kx[:, None] ** 2 + ky[None, :] ** 2
        lam.setflags(write=False)
        inv = np.zeros_like(lam)
        inv[lam > 0] = 1.0 / lam[lam > 0]
        inv.setflags(write=False)
        object.__setattr__(self, "_lam", lam)
        object.__setattr__(self, "_inv_lam", inv)

    # geometry -------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Read-only ``(nx, ny)`` array of ``(pi j/lx)^2 + (pi k/ly)^2``."""
        return self._lam

    @property
    def cell_area(self) -> float:
        return self.lx * self.ly / (self.nx * self.ny)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.lx / self.nx
        y = (np.arange(self.ny) + 0.5) * self.ly / self.ny
        return np.meshgrid(x, y, indexing="ij")

    def _check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise GridMismatchError(f"field shape {f.shape} does not match grid {self.shape}")
        return f

    # transforms -----------------------------------------------------------
    def dct(self, f) -> np.ndarray:
        return sfft.dctn(self._check(f), type=2, norm="ortho", workers=self.workers)

    def idct(self, s) -> np.ndarray:
        return sfft.idctn(self._check(s), type=2, norm="ortho", workers=self.workers)

    # quadrature -----------------------------------------------------------
    def mean(self, f) -> float:
        return float(np.mean(self._check(f)))

    def inner(self, f, g) -> float:
        return float(np.sum(self._check(f) * self._check(g)) * self.cell_area)

    def l2_norm(self, f) -> float:
        f = self._check(f)
        return float(np.sqrt(np.sum(f * f) * self.cell_area))

    def h1_seminorm(self, f) -> float:
        return self.h1_seminorm_hat(self.dct(f))

    def h1_seminorm_hat(self, fh) -> float:
        return float(np.sqrt(np.sum(self._lam * fh * fh) * self.cell_area))

    # operators ------------------------------------------------------------
    def laplacian(self, f) -> np.ndarray:
        """Neumann Laplacian; the constant mode is mapped to exactly zero."""
        return self.idct(-self._lam * self.dct(f))

    def neg_laplacian(self, f) -> np.ndarray:
        """The operator ``A = -Laplacian``."""
        return self.idct(self._lam * self.dct(f))

    def _check_zero_mean_hat(self, fh):
        scale = np.sqrt(np.sum(fh * fh))
        if abs(fh[0, 0]) > ZERO_MEAN_RTOL * scale:
            m = fh[0, 0] / np.sqrt(self.nx * self.ny)
            raise NonZeroMeanError(f"field mean {m:.3e} is not zero to relative tolerance {ZERO_MEAN_RTOL:g}")

    def inv_neumann_laplacian(self, f) -> np.ndarray:
        """``N = A^{-1}`` on zero-mean fields; the result has zero mean."""
        fh = self.dct(f)
        self._check_zero_mean_hat(fh)
        return self.idct(self._inv_lam * fh)

    def inv_neumann_laplacian_projected(self, f) -> np.ndarray:
        """``N (f - mean f)`` for any field, with no mean gate."""
        return self.idct(self._inv_lam * self.dct(f))

    def star_norm(self, f) -> float:
        """``||grad N f||`` for a zero-mean field."""
        fh = self.dct(f)
        self._check_zero_mean_hat(fh)
        return self.star_norm_hat(fh)

    def star_norm_hat(self, fh) -> float:
        """Star norm from coefficients, ignoring the constant mode."""
        return float(np.sqrt(np.sum(self._inv_lam * fh * fh) * self.cell_area))

    def minus_one_norm(self, f) -> float:
        """``sqrt(||f - mean f||_*^2 + mean(f)^2)``."""
        fh = self.dct(f)
        m = fh[0, 0] / np.sqrt(self.nx * self.ny)
        return float(np.sqrt(self.star_norm_hat(fh) ** 2 + m * m))

    def symbol(self, a: float, b: float, c: float) -> np.ndarray:
        lam = self._lam
        sym = a + b * lam + c * lam * lam
        scale = abs(a) + abs(b) * lam + abs(c) * lam * lam
        if np.any(np.abs(sym) <= 1e-14 * np.maximum(scale, np.finfo(float).tiny)):
            raise SingularSymbolError(f"a + b*lam + c*lam^2 vanishes on the grid (a={a}, b={b}, c={c})")
        return sym

    def helmholtz_solve(self, a: float, b: float, c: float, rhs) -> np.ndarray:
        """Solve ``(a I + b (-Lap) + c Lap^2) x = rhs`` mode by mode."""
        return self.idct(self.dct(rhs) / self.symbol(a, b, c))

    def helmholtz_apply(self, a: float, b: float, c: float, x) -> np.ndarray:
        lam = self._lam
        return self.idct((a + b * lam + c * lam * lam) * self.dct(x))
