"""Static (Guyan) condensation onto a master DOF set.

The reduction basis is T = [I; G] with G = -K_ss^{-1} K_sm computed from
the realized stiffness, so the condensed model is exact for static loads
applied at master DOFs and its natural frequencies bound the full ones
from above.  Master selection uses batched elimination of the DOFs with
the largest K_ii / M_ii diagonal ratio, re-condensing between batches;
it runs once on the nominal system and the partition is then frozen.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import SolverError

_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class DofPartition:
    """Disjoint master/slave split of the free DOFs, both sorted."""

    masters: np.ndarray
    slaves: np.ndarray
    n_total: int

    def __post_init__(self):
        masters = np.unique(np.asarray(self.masters, dtype=np.int64))
        slaves = np.unique(np.asarray(self.slaves, dtype=np.int64))
        object.__setattr__(self, "masters", masters)
        object.__setattr__(self, "slaves", slaves)
        if len(masters) == 0:
            raise ValueError("partition needs at least one master DOF")
        if len(masters) + len(slaves) != self.n_total:
            raise ValueError("masters and slaves must partition all DOFs")
        if np.intersect1d(masters, slaves).size > 0:
            raise ValueError("masters and slaves overlap")
        all_dofs = np.union1d(masters, slaves)
        if all_dofs[0] != 0 or all_dofs[-1] != self.n_total - 1 or len(all_dofs) != self.n_total:
            raise ValueError("partition does not cover 0..n_total-1")

    def master_positions(self, dofs):
        """Positions of global ``dofs`` inside the sorted master list."""
        dofs = np.asarray(dofs, dtype=np.int64)
        pos = np.searchsorted(self.masters, dofs)
        ok = (pos < len(self.masters)) & (self.masters[np.minimum(pos, len(self.masters) - 1)] == dofs)
        if not np.all(ok):
            raise ValueError(f"DOFs {dofs[~ok]} are not masters")
        return pos


def select_masters(sysm, target_count, required_dofs=()):
    """Choose a master set of size ``target_count`` on one realized system.

    DOFs with the largest stiffness-to-mass diagonal ratio are removed in
    batches of about 40 percent of the surviving set, with a static
    condensation of both matrices between batches so later ratios see the
    already-reduced model.  ``required_dofs`` are never eliminated.

    Deterministic for a given system: ties are broken by DOF order.

    Returns
    -------
    DofPartition
    """
    n = sysm.n_dofs
    required = np.unique(np.asarray(required_dofs, dtype=np.int64))
    if required.size and (required[0] < 0 or required[-1] >= n):
        raise ValueError("required DOF out of range")
    if not len(required) <= target_count <= n:
        raise ValueError(
            f"target_count must lie in [{len(required)}, {n}], got {target_count}"
        )
    if target_count == n:
        return DofPartition(np.arange(n), np.empty(0, dtype=np.int64), n)

    k = sysm.stiffness.toarray()
    m = sysm.mass.toarray()
    cur = np.arange(n)
    while len(cur) > target_count:
        ratio = np.diag(k) / np.diag(m)
        surplus = len(cur) - target_count
        batch = min(surplus, max(1, int(0.4 * len(cur))))
        order = np.argsort(-ratio, kind="stable")
        removable = order[~np.isin(cur[order], required)]
        elim = np.sort(removable[:batch])
        keep = np.setdiff1d(np.arange(len(cur)), elim, assume_unique=True)

        g = -sla.solve(k[np.ix_(elim, elim)], k[np.ix_(elim, keep)], assume_a="pos")
        k = k[np.ix_(keep, keep)] + k[np.ix_(keep, elim)] @ g
        t1 = m[np.ix_(keep, elim)] @ g
        m = m[np.ix_(keep, keep)] + t1 + t1.T + g.T @ (m[np.ix_(elim, elim)] @ g)
        cur = cur[keep]

    masters = np.sort(cur)
    slaves = np.setdiff1d(np.arange(n), masters, assume_unique=True)
    return DofPartition(masters, slaves, n)


@dataclass
class ReducedSystem:
    """Condensed matrices plus the factors needed for back-expansion."""

    partition: DofPartition
    m_r: np.ndarray
    c_r: np.ndarray
    k_r: np.ndarray
    theta: np.ndarray
    _lu_ss: object
    _k_sm: sparse.csc_matrix

    @property
    def n_masters(self):
        return len(self.partition.masters)

    def slave_expansion(self, z_m):
        """Static back-expansion -K_ss^{-1} K_sm z_m for one master vector."""
        rhs = self._k_sm @ z_m
        if np.iscomplexobj(rhs):
            return -(self._lu_ss.solve(rhs.real) + 1j * self._lu_ss.solve(rhs.imag))
        return -self._lu_ss.solve(rhs)


def condense(sysm, partition):
    """Condense one realized system onto the partition's masters.

    Returns
    -------
    ReducedSystem
        Dense M_r, C_r, K_r of size n_masters; K_r is the Schur
        complement of K_ss, M_r the congruence T^T M T, and C_r the
        proportional combination a_mass*M_r + a_stiff*K_r (equal to
        T^T C T because C is proportional by construction).
    """
    if partition.n_total != sysm.n_dofs:
        raise ValueError(
            f"partition covers {partition.n_total} DOFs, system has {sysm.n_dofs}"
        )
    mi, si = partition.masters, partition.slaves
    k = sysm.stiffness.tocsc()
    m = sysm.mass.tocsc()

    if len(si) == 0:
        k_r = k.toarray()
        m_r = m.toarray()
        c_r = sysm.a_mass * m_r + sysm.a_stiff * k_r
        lu = None
        k_sm = sparse.csc_matrix((0, len(mi)))
        return ReducedSystem(partition, m_r, c_r, k_r, sysm.theta.copy(), lu, k_sm)

    k_ss = k[si][:, si].tocsc()
    k_sm = k[si][:, mi].tocsc()
    try:
        lu = splu(k_ss)
    except RuntimeError as exc:
        raise SolverError(f"slave stiffness block is singular: {exc}") from exc
    g = -lu.solve(k_sm.toarray())

    k_r = k[mi][:, mi].toarray() + k[mi][:, si] @ g
    m_ms = m[mi][:, si]
    t1 = m_ms @ g
    m_r = m[mi][:, mi].toarray() + t1 + t1.T + g.T @ (m[si][:, si] @ g)
    c_r = sysm.a_mass * m_r + sysm.a_stiff * k_r
    return ReducedSystem(partition, m_r, c_r, k_r, sysm.theta.copy(), lu, k_sm)


def solve_reduced_frf(red, request):
    """Complex master responses of the condensed model per frequency.

    All forced DOFs must be masters (guaranteed when the partition came
    from ``select_masters`` with the forced set required).

    Returns
    -------
    ndarray of complex, shape (n_frequencies, n_masters)
    """
    request.validate(red.partition.n_total)
    forced = np.array([d for d, _ in request.forces], dtype=np.int64)
    pos = red.partition.master_positions(forced)
    f_r = np.zeros(red.n_masters)
    for p, (_, amp) in zip(pos, request.forces):
        f_r[p] += amp
    fnorm = np.linalg.norm(f_r)

    out = np.empty((len(request.frequencies_hz), red.n_masters), dtype=complex)
    for fi, f_hz in enumerate(request.frequencies_hz):
        w = 2.0 * np.pi * f_hz
        a = red.k_r + 1j * w * red.c_r - (w * w) * red.m_r
        lu = sla.lu_factor(a)
        z = sla.lu_solve(lu, f_r.astype(complex))
        resid = np.nan
        for _ in range(4):
            r = f_r - a @ z
            resid = np.linalg.norm(r) / fnorm
            if np.isfinite(resid) and resid < _RESIDUAL_TOL:
                break
            z = z + sla.lu_solve(lu, r)
        if not np.isfinite(resid) or resid > _RESIDUAL_TOL:
            raise SolverError(f"reduced FRF residual {resid:.3e} at {f_hz} Hz")
        out[fi] = z
    return out


def expand_response(red, z_masters, output_dofs):
    """Response magnitudes at arbitrary output DOFs.

    Master outputs are read directly; slave outputs are recovered through
    the static transformation of the same realized stiffness.

    Parameters
    ----------
    red : ReducedSystem
    z_masters : ndarray, shape (n_frequencies, n_masters)
    output_dofs : array_like of int
        Global free DOF indices.

    Returns
    -------
    ndarray, shape (n_outputs * n_frequencies,)
        DOF-major within each frequency, frequencies in grid order.
    """
    output_dofs = np.asarray(output_dofs, dtype=np.int64)
    masters, slaves = red.partition.masters, red.partition.slaves
    is_master = np.isin(output_dofs, masters)
    n_out = len(output_dofs)
    p = z_masters.shape[0]
    out = np.empty(n_out * p)

    mpos = np.searchsorted(masters, output_dofs[is_master])
    spos = np.searchsorted(slaves, output_dofs[~is_master])
    if np.any(~is_master):
        wanted = output_dofs[~is_master]
        bad = (
            len(slaves) == 0
            or np.any(spos >= len(slaves))
            or np.any(slaves[np.minimum(spos, len(slaves) - 1)] != wanted)
        )
        if bad:
            raise ValueError("output DOF is neither master nor slave of this partition")

    for fi in range(p):
        row = np.empty(n_out, dtype=complex)
        row[is_master] = z_masters[fi, mpos]
        if np.any(~is_master):
            z_s = red.slave_expansion(z_masters[fi])
            row[~is_master] = z_s[spos]
        out[fi * n_out : (fi + 1) * n_out] = np.abs(row)
    return out


def reduced_natural_frequencies(red, count):
    """Lowest ``count`` natural frequencies of the condensed model in Hz."""
    if not 0 < count <= red.n_masters:
        raise ValueError(f"count must lie in (0, {red.n_masters}], got {count}")
    vals = sla.eigh(red.k_r, red.m_r, eigvals_only=True)
    vals = np.sort(vals)[:count]
    if np.any(vals <= 0.0):
        raise SolverError("non-positive reduced eigenvalue")
    return np.sqrt(vals) / (2.0 * np.pi)
