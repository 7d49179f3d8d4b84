"""Parametric guide families: features, least squares fits, AIC and TIC.

A family is a named list of feature functions, linear in the coefficients.
Every feature knows its own derivatives of any order, which the bias and
selection machinery lean on later. Families can be assembled directly, taken
from the built-in example library, or parsed from a compact expression such
as ``"const + expdamp(const + sin(7) + cos(3))"``.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateFitError, PositivityError, RankDeficiencyError


class Feature:
    """A scalar basis function with derivatives of every order."""

    name = "feature"

    def value(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, order):
        raise NotImplementedError

    def __repr__(self):
        return self.name

    def __eq__(self, other):
        return type(other) is type(self) and other.__dict__ == self.__dict__

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.__dict__.items()))))


class ConstantFeature(Feature):
    name = "const"

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return np.ones_like(x)
        return np.zeros_like(x)


class MonomialFeature(Feature):
    """x**power for an integer power >= 1."""

    def __init__(self, power):
        power = int(power)
        if power < 1:
            raise ValueError("monomial power must be >= 1; use const for x**0")
        self.power = power
        self.name = f"x^{power}"

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        k = self.power
        if order > k:
            return np.zeros_like(x)
        coef = math.factorial(k) / math.factorial(k - order)
        return coef * x ** (k - order)


class SineFeature(Feature):
    """sin(multiple * pi * x)."""

    def __init__(self, multiple):
        self.multiple = float(multiple)
        self.name = f"sin({_fmt_multiple(self.multiple)}pi x)"

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        w = self.multiple * math.pi
        return w**order * np.sin(w * x + order * math.pi / 2)


class CosineFeature(Feature):
    """cos(multiple * pi * x)."""

    def __init__(self, multiple):
        self.multiple = float(multiple)
        self.name = f"cos({_fmt_multiple(self.multiple)}pi x)"

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        w = self.multiple * math.pi
        return w**order * np.cos(w * x + order * math.pi / 2)


class DampedFeature(Feature):
    """exp(-x) times an inner feature."""

    def __init__(self, inner):
        self.inner = inner
        self.name = f"exp(-x)*{inner.name}"

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for i in range(order + 1):
            sign = (-1.0) ** (order - i)
            total += math.comb(order, i) * sign * self.inner.derivative(x, i)
        return np.exp(-x) * total


def _fmt_multiple(m):
    return f"{int(m)}" if float(m).is_integer() else f"{m:g}"


@dataclass(frozen=True)
class ParametricFamily:
    """A named model family, linear in its coefficients."""

    name: str
    features: tuple

    @property
    def n_params(self):
        return len(self.features)

    def design(self, x):
        """Feature matrix of shape (len(x), n_params)."""
        x = np.asarray(x, dtype=float)
        return np.column_stack([f.value(x) for f in self.features])

    def derivative_design(self, x, order):
        """Same layout as design(), but with order-th feature derivatives."""
        x = np.asarray(x, dtype=float)
        return np.column_stack([f.derivative(x, order) for f in self.features])

    def with_coefficients(self, beta):
        """Pin coefficients without fitting (rss and n_obs left unset)."""
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.n_params,):
            raise ValueError(
                f"family {self.name!r} takes {self.n_params} coefficients, "
                f"got shape {beta.shape}"
            )
        return FittedParametricModel(family=self, beta=beta, rss=None, n_obs=None)

    def is_polynomial(self, max_degree=None):
        """True when every feature is a plain monomial or constant."""
        degrees = []
        for f in self.features:
            if isinstance(f, ConstantFeature):
                degrees.append(0)
            elif isinstance(f, MonomialFeature):
                degrees.append(f.power)
            else:
                return False
        if max_degree is None:
            return True
        return max(degrees) <= max_degree


@dataclass(frozen=True, eq=False)
class FittedParametricModel:
    """A family with coefficients attached, evaluable like a function."""

    family: ParametricFamily
    beta: np.ndarray
    rss: float
    n_obs: int

    @property
    def n_params(self):
        return self.family.n_params

    @property
    def name(self):
        return self.family.name

    def value(self, x):
        scalar = np.isscalar(x)
        out = self.family.design(np.atleast_1d(x)) @ self.beta
        return float(out[0]) if scalar else out

    def derivative(self, x, order):
        scalar = np.isscalar(x)
        out = self.family.derivative_design(np.atleast_1d(x), order) @ self.beta
        return float(out[0]) if scalar else out

    def min_on_grid(self, grid_size=1001):
        """Smallest value over an even grid on [0, 1], endpoints included."""
        grid = np.linspace(0.0, 1.0, grid_size)
        return float(np.min(self.value(grid)))

    def check_positive(self, floor=1e-3, grid_size=1001):
        """Reject fits that dip to or below ``floor`` anywhere on the grid."""
        low = self.min_on_grid(grid_size)
        if not low > floor:
            raise PositivityError(
                f"family {self.name!r} reaches {low:.6g} on [0, 1]; "
                f"multiplicative correction needs values above {floor:g}"
            )
        return low


def fit_ols(family, xs, ys):
    """Ordinary least squares fit of a family.

    Raises
    ------
    RankDeficiencyError
        When the feature columns are linearly dependent on this design; the
        message names the features implicated by the null-space directions.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    f = family.design(x)
    m = family.n_params
    beta, _, rank, sv = np.linalg.lstsq(f, y, rcond=None)
    if rank < m:
        # Right singular vectors with tiny singular values say which
        # combinations of features the data cannot tell apart.
        _, s, vt = np.linalg.svd(f, full_matrices=True)
        cutoff = max(f.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        culprits = set()
        for row in range(m - 1, -1, -1):
            if row >= s.size or s[row] <= cutoff:
                direction = vt[row]
                for idx in np.flatnonzero(np.abs(direction) > 0.3):
                    culprits.add(family.features[idx].name)
        raise RankDeficiencyError(
            f"design for family {family.name!r} is rank deficient "
            f"(rank {rank} of {m}); collinear features: "
            + ", ".join(sorted(culprits)),
            deficiency=m - rank,
        )
    resid = y - f @ beta
    return FittedParametricModel(
        family=family, beta=beta, rss=float(resid @ resid), n_obs=int(y.size)
    )


def _check_scoreable(fit):
    if fit.rss is None or fit.n_obs is None:
        raise ValueError("model was pinned, not fitted; nothing to score")
    sigma2 = fit.rss / fit.n_obs
    if sigma2 <= 0.0 or not np.isfinite(sigma2):
        raise DegenerateFitError(
            f"family {fit.name!r} fits the data exactly; information criteria "
            "are undefined at zero residual variance"
        )
    return sigma2


def aic(fit):
    """Gaussian AIC: n log(2 pi s2) + n + 2 (M + 1), s2 = RSS / n."""
    sigma2 = _check_scoreable(fit)
    n = fit.n_obs
    return n * math.log(2.0 * math.pi * sigma2) + n + 2.0 * (fit.n_params + 1)


def tic(fit, xs, ys):
    """Takeuchi's criterion under the Gaussian working likelihood.

    Same goodness-of-fit term as AIC but the dimension penalty is replaced by
    2 tr(J^-1 I), with J the observed information and I the outer-product
    information of the (beta, sigma2) score, both averaged over observations.
    """
    sigma2 = _check_scoreable(fit)
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    n = fit.n_obs
    if x.size != n or y.size != n:
        raise ValueError("tic needs the same data the model was fitted on")
    f = fit.family.design(x)
    eps = y - f @ fit.beta
    m = fit.n_params

    # Score rows: d/d beta = eps * g / s2, d/d s2 = (eps^2 - s2) / (2 s2^2).
    scores = np.empty((n, m + 1))
    scores[:, :m] = f * (eps / sigma2)[:, None]
    scores[:, m] = (eps**2 - sigma2) / (2.0 * sigma2**2)
    info_outer = scores.T @ scores / n

    info_observed = np.zeros((m + 1, m + 1))
    info_observed[:m, :m] = f.T @ f / (n * sigma2)
    cross = f.T @ eps / (n * sigma2**2)
    info_observed[:m, m] = cross
    info_observed[m, :m] = cross
    info_observed[m, m] = -0.5 / sigma2**2 + np.mean(eps**2) / sigma2**3

    try:
        penalty = float(np.trace(np.linalg.solve(info_observed, info_outer)))
    except np.linalg.LinAlgError:
        raise DegenerateFitError(
            f"observed information for family {fit.name!r} is singular"
        ) from None
    return n * math.log(2.0 * math.pi * sigma2) + n + 2.0 * penalty


# ---------------------------------------------------------------------------
# Expression vocabulary and the example library.

_TERM_RE = re.compile(r"^(const|poly|sin|cos|expdamp)\s*(?:\(\s*(.*)\s*\))?$")


def _split_terms(text):
    """Split on '+' at depth zero, keeping parenthesized groups intact."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ValueError(f"unbalanced ')' in model expression: {text!r}")
        elif ch == "+" and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth != 0:
        raise ValueError(f"unbalanced '(' in model expression: {text!r}")
    parts.append(text[start:])
    parts = [p.strip() for p in parts]
    if any(not p for p in parts):
        raise ValueError(f"empty term in model expression: {text!r}")
    return parts


def _parse_terms(text, allow_damped):
    features = []
    for term in _split_terms(text):
        match = _TERM_RE.match(term)
        if match is None:
            raise ValueError(
                f"cannot parse model term {term!r}; expected const, poly(q), "
                "sin(k), cos(k) or expdamp(...)"
            )
        head, arg = match.group(1), match.group(2)
        if head == "const":
            if arg not in (None, ""):
                raise ValueError("const takes no argument")
            features.append(ConstantFeature())
            continue
        if arg is None or arg == "":
            raise ValueError(f"{head} needs an argument in {term!r}")
        if head == "poly":
            degree = int(arg)
            if degree < 1:
                raise ValueError(f"poly degree must be >= 1, got {degree}")
            features.extend(MonomialFeature(k) for k in range(1, degree + 1))
        elif head == "sin":
            features.append(SineFeature(float(arg)))
        elif head == "cos":
            features.append(CosineFeature(float(arg)))
        elif head == "expdamp":
            if not allow_damped:
                raise ValueError("expdamp cannot be nested")
            features.extend(
                DampedFeature(inner) for inner in _parse_terms(arg, False)
            )
    return features


def parse_family(expression, name=None):
    """Build a family from the term vocabulary.

    Terms are joined with ``+``: ``const``, ``poly(q)`` (monomials x..x^q),
    ``sin(k)`` and ``cos(k)`` (frequency k multiples of pi), and
    ``expdamp(inner)`` which multiplies each inner term by exp(-x). Example:
    ``"const + expdamp(const + sin(7) + cos(3))"``.
    """
    text = expression.strip()
    if not text:
        raise ValueError("empty model expression")
    features = _parse_terms(text, True)
    if not features:
        raise ValueError(f"model expression {expression!r} has no features")
    return ParametricFamily(name=name or " + ".join(_split_terms(text)),
                            features=tuple(features))


def _poly_family(degree, name=None):
    return parse_family(f"const + poly({degree})", name=name or f"poly{degree}")


def model_library(example):
    """Candidate families used by the four simulation benchmarks."""
    example = int(example)
    if example == 1:
        return [
            parse_family("const + sin(2)", name="sin"),
            _poly_family(1),
            _poly_family(3),
        ]
    if example in (2, 3):
        return [_poly_family(q) for q in range(1, 7)]
    if example == 4:
        def damped(inner, name):
            return parse_family(f"const + expdamp({inner})", name=name)

        return [
            damped("const + sin(7) + cos(3)", "sincos"),
            damped("const + sin(7)", "sin"),
            damped("const + cos(3)", "cos"),
            damped("const + poly(1)", "poly1"),
            damped("const + poly(4)", "poly4"),
            damped("const + poly(8)", "poly8"),
        ]
    raise ValueError(f"no example {example}; the library covers 1 through 4")


_BARE_NAME_RE = re.compile(r"^poly(\d+)$")


def resolve_family(spec, example=None):
    """Turn a CLI-ish model spec into a family.

    ``spec`` may already be a family, a library name (within ``example`` when
    given, else the undamped canonical table: sin, cos, polyN, const), or an
    expression for parse_family().
    """
    if isinstance(spec, ParametricFamily):
        return spec
    if isinstance(spec, FittedParametricModel):
        return spec
    text = str(spec).strip()
    if example is not None:
        for family in model_library(example):
            if family.name == text:
                return family
    if text == "const":
        return ParametricFamily(name="const", features=(ConstantFeature(),))
    if text == "sin":
        return parse_family("const + sin(2)", name="sin")
    if text == "cos":
        return parse_family("const + cos(2)", name="cos")
    match = _BARE_NAME_RE.match(text)
    if match:
        return _poly_family(int(match.group(1)))
    return parse_family(text)
