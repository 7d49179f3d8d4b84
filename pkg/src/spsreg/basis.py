"""Uniform B-spline bases on the unit interval and difference penalties.

The basis here is the one used throughout the package: degree ``p`` pieces on
``K`` equal segments of [0, 1], with the knot line extended ``p`` steps past
each end at the same spacing (no clamping, so no repeated boundary knots).
That gives ``K + p`` basis functions forming a partition of unity on the
closed interval.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_covariate


class BSplineBasis:
    """Degree ``p`` B-splines on [0, 1] over ``K`` equal knot segments.

    Knots sit at k / K for k = -p, ..., K + p. Basis function ``i`` (zero
    based, i = 0, ..., K+p-1) is supported on [knots[i], knots[i+p+1]].
    Points are assigned to knot segments right-open, except that x = 1.0
    belongs to the last segment, so evaluation is defined on the closed
    interval.

    Parameters
    ----------
    degree : int
        Polynomial degree p >= 0 of each piece.
    segments : int
        Number of knot segments K >= 1 inside [0, 1].
    """

    def __init__(self, degree, segments):
        degree = int(degree)
        segments = int(segments)
        if degree < 0:
            raise ValueError(f"degree must be >= 0, got {degree}")
        if segments < 1:
            raise ValueError(f"segments must be >= 1, got {segments}")
        self.degree = degree
        self.segments = segments
        self.knots = np.arange(-degree, segments + degree + 1) / segments

    @property
    def size(self):
        """Number of basis functions, K + p."""
        return self.segments + self.degree

    def __repr__(self):
        return f"BSplineBasis(degree={self.degree}, segments={self.segments})"

    def __eq__(self, other):
        return (
            isinstance(other, BSplineBasis)
            and other.degree == self.degree
            and other.segments == self.segments
        )

    def __hash__(self):
        return hash((self.degree, self.segments))

    def segment_index(self, xs):
        """Zero-based knot segment of each point, in {0, ..., K-1}.

        Uses the knot values themselves for the lookup, so a point equal to
        an interior knot lands in the segment to its right; x = 1.0 is pulled
        back into segment K-1.
        """
        x = np.asarray(xs, dtype=float)
        idx = np.searchsorted(self.knots, x, side="right") - 1 - self.degree
        return np.clip(idx, 0, self.segments - 1)

    def design_matrix(self, xs):
        """Evaluate all basis functions at each point.

        Parameters
        ----------
        xs : array-like
            Points in [0, 1].

        Returns
        -------
        numpy.ndarray of shape (len(xs), K + p)
            Row i holds B_0(x_i), ..., B_{K+p-1}(x_i). Each row has at most
            p + 1 non-zero entries and sums to one.
        """
        x = check_covariate(xs, name="xs")
        p = self.degree
        t = self.knots
        seg = self.segment_index(x)
        mu = seg + p

        # Triangular recursion over the p+1 functions alive on each segment.
        vals = np.zeros((x.size, p + 1))
        vals[:, 0] = 1.0
        left = np.zeros((x.size, p + 1))
        right = np.zeros((x.size, p + 1))
        for d in range(1, p + 1):
            left[:, d] = x - t[mu + 1 - d]
            right[:, d] = t[mu + d] - x
            saved = np.zeros(x.size)
            for r in range(d):
                denom = right[:, r + 1] + left[:, d - r]
                temp = vals[:, r] / denom
                vals[:, r] = saved + right[:, r + 1] * temp
                saved = left[:, d - r] * temp
            vals[:, d] = saved

        out = np.zeros((x.size, self.size))
        cols = seg[:, None] + np.arange(p + 1)[None, :]
        np.put_along_axis(out, cols, vals, axis=1)
        return out

    def evaluate(self, x):
        """Basis values at a single point, as a length K + p vector."""
        return self.design_matrix([float(x)])[0]


@dataclass(frozen=True)
class DifferencePenalty:
    """An m-th order difference penalty on spline coefficients.

    ``differences`` is the (dim - m, dim) matrix D_m of m-fold first
    differences; ``matrix`` is Q_m = D_m' D_m, the quadratic form actually
    added to the normal equations.
    """

    order: int
    differences: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.matrix.shape[0]


def difference_penalty(order, dim):
    """Build the order-m difference penalty for a coefficient vector.

    Parameters
    ----------
    order : int
        Difference order m >= 1.
    dim : int
        Length of the coefficient vector; must exceed ``order``.

    Returns
    -------
    DifferencePenalty
    """
    order = int(order)
    dim = int(dim)
    if order < 1:
        raise ValueError(f"penalty order must be >= 1, got {order}")
    if dim <= order:
        raise ValueError(
            f"penalty order {order} needs more than {order} coefficients, got {dim}"
        )
    d = np.diff(np.eye(dim), n=order, axis=0)
    return DifferencePenalty(order=order, differences=d, matrix=d.T @ d)


def polynomial_coefficients(basis, poly_coeffs):
    """Spline coefficients that reproduce a polynomial exactly.

    Uses the dual-polynomial expansion of the monomials: with
    phi_k(z) = prod_{l=1..p} (knot_{k+l} - z) over the interior knots of
    B_k's support,

        x^i = sum_k (-1)^(p-i) * (i! / p!) * phi_k^{(p-i)}(0) * B_k(x),

    valid on all of [0, 1] for i <= p.

    Parameters
    ----------
    basis : BSplineBasis
    poly_coeffs : array-like
        Polynomial coefficients (c_0, ..., c_q) in ascending powers,
        q <= basis.degree.

    Returns
    -------
    numpy.ndarray of shape (basis.size,)
        Coefficients b with sum_k b_k B_k(x) = sum_i c_i x^i on [0, 1].
    """
    coeffs = np.atleast_1d(np.asarray(poly_coeffs, dtype=float))
    if coeffs.ndim != 1 or coeffs.size == 0:
        raise ValueError("poly_coeffs must be a non-empty 1d sequence")
    p = basis.degree
    q = coeffs.size - 1
    if q > p:
        raise ValueError(
            f"polynomial degree {q} exceeds the basis degree {p}; "
            "exact representation is only available for q <= p"
        )
    t = basis.knots
    out = np.zeros(basis.size)
    fact = [math.factorial(i) for i in range(p + 1)]
    for k in range(basis.size):
        # phi_k in ascending powers of z; the empty product (p = 0) is 1.
        phi = np.array([1.0])
        for l in range(1, p + 1):
            phi = np.convolve(phi, np.array([t[k + l], -1.0]))
        acc = 0.0
        for i in range(q + 1):
            j = p - i
            # phi^{(j)}(0) = j! * phi[j]
            acc += coeffs[i] * (-1.0) ** j * fact[i] * fact[j] * phi[j]
        out[k] = acc / fact[p]
    return out
