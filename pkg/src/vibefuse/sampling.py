"""Latin hypercube sampling with normal marginals.

Each dimension is stratified into ``count`` equiprobable bins; one
uniform draw per bin is mapped through the inverse normal CDF, and the
bins are assigned to rows by an independent random permutation per
dimension.  Entries whose uncertainty factor 1 + delta would be
non-positive are redrawn inside their own stratum so the realized
matrices stay positive definite.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SamplingError

# AS 241 (PPND16) rational-approximation coefficients for the inverse
# normal CDF; absolute error below 1e-15 over (0, 1).
_A = (
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
)
_B = (
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
)
_C = (
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
)
_D = (
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_E = (
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_F = (
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _poly(coeffs, r):
    acc = np.full_like(r, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = acc * r + c
    return acc


def normal_quantile(p):
    """Inverse standard normal CDF (Wichura's PPND16 approximation).

    Parameters
    ----------
    p : array_like
        Probabilities strictly inside (0, 1).

    Returns
    -------
    ndarray or float
    """
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    q = p - 0.5
    out = np.empty_like(p)

    central = np.abs(q) <= 0.425
    if np.any(central):
        r = 0.180625 - q[central] ** 2
        out[central] = q[central] * _poly(_A, r) / _poly(_B, r)

    tails = ~central
    if np.any(tails):
        qt = q[tails]
        r = np.where(qt < 0.0, p[tails], 1.0 - p[tails])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        if np.any(near):
            rn = r[near] - 1.6
            val[near] = _poly(_C, rn) / _poly(_D, rn)
        if np.any(~near):
            rf = r[~near] - 5.0
            val[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tails] = np.where(qt < 0.0, -val, val)
    return out[0] if scalar else out


@dataclass(frozen=True)
class SamplingSpec:
    """Stratified normal sampling request.

    ``mean`` and ``std`` may be scalars or per-dimension arrays.
    """

    dimension: int
    count: int
    mean: object = 0.0
    std: object = 0.10
    seed: int = 0

    def validate(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be positive, got {self.dimension}")
        if self.count < 1:
            raise ValueError(f"count must be positive, got {self.count}")
        std = np.broadcast_to(np.asarray(self.std, dtype=float), (self.dimension,))
        if np.any(std <= 0.0):
            raise ValueError("std must be positive")

    def marginals(self):
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (self.dimension,))
        std = np.broadcast_to(np.asarray(self.std, dtype=float), (self.dimension,))
        return mean, std


_MAX_REDRAWS = 10000


def lhs_normal_samples(spec):
    """Draw a Latin hypercube sample with normal marginals.

    Dimensions are processed in order; per dimension the generator emits
    one permutation, one uniform vector, then any rejection redraws, so
    the result is bitwise reproducible for a given seed.

    Returns
    -------
    ndarray, shape (count, dimension)

    Raises
    ------
    SamplingError
        A stratum failed to produce 1 + delta > 0 within the redraw cap.
    """
    spec.validate()
    mean, std = spec.marginals()
    rng = np.random.default_rng(spec.seed)
    out = np.empty((spec.count, spec.dimension))
    for d in range(spec.dimension):
        strata = rng.permutation(spec.count)
        u = rng.random(spec.count)
        x = mean[d] + std[d] * normal_quantile((strata + u) / spec.count)
        bad = np.flatnonzero(1.0 + x <= 0.0)
        attempts = 0
        while bad.size:
            attempts += 1
            if attempts > _MAX_REDRAWS:
                raise SamplingError(
                    f"dimension {d}: strata {strata[bad]} cannot satisfy 1 + delta > 0"
                )
            u2 = rng.random(bad.size)
            x[bad] = mean[d] + std[d] * normal_quantile((strata[bad] + u2) / spec.count)
            bad = bad[1.0 + x[bad] <= 0.0]
        out[:, d] = x
    return out
