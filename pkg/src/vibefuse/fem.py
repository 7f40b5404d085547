"""Solid FEM core: segmented assembly, realization, FRF and modal solves.

Elements are 8-node trilinear hexahedra with consistent mass, integrated
by a 2x2x2 Gauss rule.  System matrices are assembled per segment so that
a parameter vector theta = (d_rho_1, d_E_1, ..., d_rho_S, d_E_S) realizes

    M(theta) = sum_s (1 + d_rho_s) M_s,   K(theta) = sum_s (1 + d_E_s) K_s,

with proportional damping C = a_mass M + a_stiff K.  All segment blocks
share one sparsity pattern, so realization is a weighted sum of data
vectors and is exactly linear in theta.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu, eigsh

from .errors import ElementQualityError, SolverError

_GAUSS_1D = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_CORNERS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)


@dataclass(frozen=True)
class MaterialSpec:
    """Isotropic material and proportional-damping coefficients.

    Parameters
    ----------
    young : float
        Young's modulus in Pa.
    poisson : float
        Poisson's ratio, in (-1, 0.5).
    density : float
        Mass density in kg/m^3.
    a_mass, a_stiff : float
        Damping coefficients of C = a_mass*M + a_stiff*K.
    """

    young: float
    poisson: float
    density: float
    a_mass: float = 0.0
    a_stiff: float = 0.0

    def validate(self):
        if self.young <= 0.0:
            raise ValueError(f"young must be positive, got {self.young}")
        if not -1.0 < self.poisson < 0.5:
            raise ValueError(f"poisson must lie in (-1, 0.5), got {self.poisson}")
        if self.density <= 0.0:
            raise ValueError(f"density must be positive, got {self.density}")
        if self.a_mass < 0.0 or self.a_stiff < 0.0:
            raise ValueError("damping coefficients must be nonnegative")

    def elastic_matrix(self):
        """6x6 isotropic elasticity matrix, engineering shear strains."""
        lam = self.young * self.poisson / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson))
        mu = self.young / (2.0 * (1.0 + self.poisson))
        d = np.zeros((6, 6))
        d[:3, :3] = lam
        d[np.arange(3), np.arange(3)] = lam + 2.0 * mu
        d[np.arange(3, 6), np.arange(3, 6)] = mu
        return d


def _shape_derivatives(xi, eta, zeta):
    """Shape values (8,) and natural derivatives (3, 8) at one point."""
    g = _CORNERS
    n = 0.125 * (1 + g[:, 0] * xi) * (1 + g[:, 1] * eta) * (1 + g[:, 2] * zeta)
    dn = np.empty((3, 8))
    dn[0] = 0.125 * g[:, 0] * (1 + g[:, 1] * eta) * (1 + g[:, 2] * zeta)
    dn[1] = 0.125 * g[:, 1] * (1 + g[:, 0] * xi) * (1 + g[:, 2] * zeta)
    dn[2] = 0.125 * g[:, 2] * (1 + g[:, 0] * xi) * (1 + g[:, 1] * eta)
    return n, dn


def hex8_matrices(coords, elastic, density):
    """Stiffness and consistent mass of one hexahedron.

    Parameters
    ----------
    coords : ndarray, shape (8, 3)
        Corner coordinates in standard ordering.
    elastic : ndarray, shape (6, 6)
    density : float

    Returns
    -------
    ke, me : ndarray, shape (24, 24)
        Element DOFs are node-major (ux0, uy0, uz0, ux1, ...).

    Raises
    ------
    ElementQualityError
        Non-positive Jacobian determinant at a quadrature point.
    """
    ke = np.zeros((24, 24))
    me = np.zeros((24, 24))
    for xi in _GAUSS_1D:
        for eta in _GAUSS_1D:
            for zeta in _GAUSS_1D:
                n, dn = _shape_derivatives(xi, eta, zeta)
                jac = dn @ coords
                det = np.linalg.det(jac)
                if det <= 0.0:
                    raise ElementQualityError(
                        f"non-positive Jacobian determinant {det} at ({xi}, {eta}, {zeta})"
                    )
                dndx = np.linalg.solve(jac, dn)
                b = np.zeros((6, 24))
                b[0, 0::3] = dndx[0]
                b[1, 1::3] = dndx[1]
                b[2, 2::3] = dndx[2]
                b[3, 0::3] = dndx[1]
                b[3, 1::3] = dndx[0]
                b[4, 1::3] = dndx[2]
                b[4, 2::3] = dndx[1]
                b[5, 0::3] = dndx[2]
                b[5, 2::3] = dndx[0]
                nmat = np.zeros((3, 24))
                nmat[0, 0::3] = n
                nmat[1, 1::3] = n
                nmat[2, 2::3] = n
                ke += (b.T @ elastic @ b) * det
                me += density * (nmat.T @ nmat) * det
    return ke, me


@dataclass
class SegmentedSystem:
    """Per-segment matrix blocks on a shared sparsity pattern.

    ``mass_data[s]`` and ``stiff_data[s]`` are the CSR data vectors of
    M_s and K_s on the pattern (``indices``, ``indptr``); the nominal
    data vectors are their sums over segments.
    """

    n_dofs: int
    n_segments: int
    indices: np.ndarray
    indptr: np.ndarray
    mass_data: np.ndarray
    stiff_data: np.ndarray
    nominal_mass_data: np.ndarray = field(init=False)
    nominal_stiff_data: np.ndarray = field(init=False)
    material: MaterialSpec = None

    def __post_init__(self):
        self.nominal_mass_data = self.mass_data.sum(axis=0)
        self.nominal_stiff_data = self.stiff_data.sum(axis=0)

    def _matrix(self, data):
        return sparse.csr_matrix(
            (data, self.indices, self.indptr), shape=(self.n_dofs, self.n_dofs)
        )

    def segment_mass(self, s):
        """M_s as a CSR matrix (zero rows outside the segment)."""
        return self._matrix(self.mass_data[s].copy())

    def segment_stiffness(self, s):
        return self._matrix(self.stiff_data[s].copy())


@dataclass
class SystemMatrices:
    """One realized system: M, C, K and the parameter vector that made it."""

    mass: sparse.csr_matrix
    damping: sparse.csr_matrix
    stiffness: sparse.csr_matrix
    theta: np.ndarray
    a_mass: float
    a_stiff: float

    @property
    def n_dofs(self):
        return self.mass.shape[0]


@dataclass
class FrfRequest:
    """Harmonic load case and observation set.

    Parameters
    ----------
    frequencies_hz : ndarray, shape (p,)
        Strictly increasing, positive excitation frequencies.
    forces : list of (int, float)
        (free DOF index, amplitude) pairs; all DOFs driven in phase.
    output_dofs : ndarray of int, shape (n,)
        Free DOF indices whose response magnitudes are collected.
    """

    frequencies_hz: np.ndarray
    forces: list
    output_dofs: np.ndarray

    def __post_init__(self):
        self.frequencies_hz = np.asarray(self.frequencies_hz, dtype=float)
        self.output_dofs = np.asarray(self.output_dofs, dtype=np.int64)

    def validate(self, n_dofs):
        f = self.frequencies_hz
        if f.ndim != 1 or len(f) == 0:
            raise ValueError("frequencies_hz must be a nonempty 1-d array")
        if np.any(f <= 0.0) or np.any(np.diff(f) <= 0.0):
            raise ValueError("frequencies_hz must be positive and strictly increasing")
        if not self.forces:
            raise ValueError("at least one forced DOF is required")
        for dof, amp in self.forces:
            if not 0 <= dof < n_dofs:
                raise ValueError(f"forced DOF {dof} out of range [0, {n_dofs})")
            if amp == 0.0:
                raise ValueError(f"forced DOF {dof} has zero amplitude")
        if len(self.output_dofs) == 0:
            raise ValueError("at least one output DOF is required")
        if np.any(self.output_dofs < 0) or np.any(self.output_dofs >= n_dofs):
            raise ValueError("output DOF out of range")

    def force_vector(self, n_dofs):
        f = np.zeros(n_dofs)
        for dof, amp in self.forces:
            f[dof] += amp
        return f


def assemble_segments(mesh, material):
    """Assemble per-segment mass and stiffness blocks over free DOFs.

    Parameters
    ----------
    mesh : MeshModel
    material : MaterialSpec

    Returns
    -------
    SegmentedSystem
    """
    material.validate()
    elastic = material.elastic_matrix()
    n = mesh.n_dofs

    rows = [[] for _ in range(mesh.n_segments)]
    cols = [[] for _ in range(mesh.n_segments)]
    kvals = [[] for _ in range(mesh.n_segments)]
    mvals = [[] for _ in range(mesh.n_segments)]

    # congruent box elements repeat, so element matrices are memoized on
    # edge lengths when the corner layout matches an axis-aligned box
    cache = {}
    for conn, seg in zip(mesh.elements, mesh.segment_ids):
        coords = mesh.nodes[conn]
        lo = coords.min(axis=0)
        dims = coords.max(axis=0) - lo
        box = lo + 0.5 * (_CORNERS + 1.0) * dims
        if np.allclose(coords, box, rtol=0.0, atol=1e-12 * max(dims.max(), 1.0)):
            key = tuple(np.round(dims, 12))
            if key not in cache:
                cache[key] = hex8_matrices(coords, elastic, material.density)
            ke, me = cache[key]
        else:
            ke, me = hex8_matrices(coords, elastic, material.density)

        edofs = mesh.dof_of_node[conn].reshape(-1)
        keep = np.flatnonzero(edofs >= 0)
        gdofs = edofs[keep]
        r = np.repeat(gdofs, len(gdofs))
        c = np.tile(gdofs, len(gdofs))
        rows[seg].append(r)
        cols[seg].append(c)
        kvals[seg].append(ke[np.ix_(keep, keep)].reshape(-1))
        mvals[seg].append(me[np.ix_(keep, keep)].reshape(-1))

    lin = []
    for s in range(mesh.n_segments):
        if rows[s]:
            lin.append(np.concatenate(rows[s]) * n + np.concatenate(cols[s]))
        else:
            lin.append(np.empty(0, dtype=np.int64))
    union = np.unique(np.concatenate(lin)) if lin else np.empty(0, dtype=np.int64)

    nnz = len(union)
    mass_data = np.zeros((mesh.n_segments, nnz))
    stiff_data = np.zeros((mesh.n_segments, nnz))
    for s in range(mesh.n_segments):
        if len(lin[s]) == 0:
            continue
        pos = np.searchsorted(union, lin[s])
        np.add.at(mass_data[s], pos, np.concatenate(mvals[s]))
        np.add.at(stiff_data[s], pos, np.concatenate(kvals[s]))

    indices = (union % n).astype(np.int32)
    counts = np.bincount((union // n).astype(np.int64), minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    return SegmentedSystem(
        n_dofs=n,
        n_segments=mesh.n_segments,
        indices=indices,
        indptr=indptr,
        mass_data=mass_data,
        stiff_data=stiff_data,
        material=material,
    )


def realize_system(system, theta):
    """Realize M, C, K for one parameter vector.

    Parameters
    ----------
    system : SegmentedSystem
    theta : array_like, shape (2 * n_segments,)
        (d_rho_s, d_E_s) pairs in segment order; every 1 + delta must be
        positive so the realized matrices stay positive definite.

    Returns
    -------
    SystemMatrices
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (2 * system.n_segments,):
        raise ValueError(
            f"theta must have length {2 * system.n_segments}, got {theta.shape}"
        )
    if np.any(1.0 + theta <= 0.0):
        raise ValueError("each 1 + delta must be positive")

    mdata = system.nominal_mass_data.copy()
    kdata = system.nominal_stiff_data.copy()
    for s in range(system.n_segments):
        if theta[2 * s] != 0.0:
            mdata += theta[2 * s] * system.mass_data[s]
        if theta[2 * s + 1] != 0.0:
            kdata += theta[2 * s + 1] * system.stiff_data[s]
    mat = system.material
    cdata = mat.a_mass * mdata + mat.a_stiff * kdata

    return SystemMatrices(
        mass=system._matrix(mdata),
        damping=system._matrix(cdata),
        stiffness=system._matrix(kdata),
        theta=theta.copy(),
        a_mass=mat.a_mass,
        a_stiff=mat.a_stiff,
    )


_RESIDUAL_TOL = 1e-9


def solve_full_frf(sysm, request):
    """Response magnitudes of the full model over the frequency grid.

    Solves (K + i*w*C - w^2*M) z = F per frequency with a sparse LU and
    collects |z| at the output DOFs.

    Returns
    -------
    ndarray, shape (n_outputs * n_frequencies,)
        DOF-major within each frequency, frequencies in grid order.

    Raises
    ------
    SolverError
        Relative residual above 1e-9 at any frequency.
    """
    request.validate(sysm.n_dofs)
    force = request.force_vector(sysm.n_dofs)
    fnorm = np.linalg.norm(force)
    n_out = len(request.output_dofs)
    out = np.empty(n_out * len(request.frequencies_hz))
    for fi, f_hz in enumerate(request.frequencies_hz):
        w = 2.0 * np.pi * f_hz
        a = (sysm.stiffness + 1j * w * sysm.damping - (w * w) * sysm.mass).tocsc()
        lu = splu(a)
        z = lu.solve(force.astype(complex))
        # refinement recovers digits lost to near-resonant conditioning
        resid = np.nan
        for _ in range(4):
            r = force - a @ z
            resid = np.linalg.norm(r) / fnorm
            if np.isfinite(resid) and resid < _RESIDUAL_TOL:
                break
            z = z + lu.solve(r)
        if not np.isfinite(resid) or resid > _RESIDUAL_TOL:
            raise SolverError(f"FRF residual {resid:.3e} at frequency {f_hz} Hz")
        out[fi * n_out : (fi + 1) * n_out] = np.abs(z[request.output_dofs])
    return out


def natural_frequencies(sysm, count):
    """Lowest ``count`` undamped natural frequencies in Hz.

    Shift-inverted Lanczos on (K, M) about zero; a fixed start vector
    keeps the result deterministic.

    Raises
    ------
    SolverError
        Non-convergence or a mode failing its residual check.
    """
    n = sysm.n_dofs
    if not 0 < count < n:
        raise ValueError(f"count must lie in (0, {n}), got {count}")
    v0 = np.full(n, 1.0 / np.sqrt(n))
    try:
        vals, vecs = eigsh(
            sysm.stiffness.tocsc(),
            k=count,
            M=sysm.mass.tocsc(),
            sigma=0.0,
            which="LM",
            v0=v0,
        )
    except Exception as exc:
        raise SolverError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    for i, lam in enumerate(vals):
        kv = sysm.stiffness @ vecs[:, i]
        r = kv - lam * (sysm.mass @ vecs[:, i])
        if np.linalg.norm(r) > 1e-8 * np.linalg.norm(kv):
            raise SolverError(f"mode {i} residual check failed")
    if np.any(vals <= 0.0):
        raise SolverError("non-positive eigenvalue; system is not constrained")
    return np.sqrt(vals) / (2.0 * np.pi)
