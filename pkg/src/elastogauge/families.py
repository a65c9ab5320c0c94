"""Built-in field families with analytic first and second partials.

The registries at the bottom map family names used in TOML configs to the
constructors here.
"""

import numpy as np

from .errors import ConfigError
from .fields import SmoothField, check_dimension, constant_field
from .tensor_core import (enforce_symmetry, euclidean_metric, isotropic_stiffness,
                          symmetrize, voigt_unpack)


# -- the standard mollifier exp(1 - 1/(1 - r^2)), equal to 1 at the centre -------

def bump_value(X, center, radius):
    q = np.sum((X - center) ** 2, axis=1) / radius ** 2
    out = np.zeros(X.shape[0])
    inside = q < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside]))
    return out


def bump_grad(X, center, radius):
    q = np.sum((X - center) ** 2, axis=1) / radius ** 2
    out = np.zeros_like(X)
    inside = q < 1.0
    qi = q[inside]
    psi = np.exp(1.0 - 1.0 / (1.0 - qi))
    dpsi_dq = -psi / (1.0 - qi) ** 2
    out[inside] = (dpsi_dq * 2.0 / radius ** 2)[:, None] * (X[inside] - center)
    return out


def bump_hess(X, center, radius):
    n = X.shape[1]
    q = np.sum((X - center) ** 2, axis=1) / radius ** 2
    out = np.zeros((X.shape[0], n, n))
    inside = q < 1.0
    qi = q[inside]
    psi = np.exp(1.0 - 1.0 / (1.0 - qi))
    w = 1.0 - qi
    d1 = -psi / w ** 2
    d2 = psi * (1.0 / w ** 4 - 2.0 / w ** 3)
    dq = 2.0 * (X[inside] - center) / radius ** 2
    out[inside] = (d2[:, None, None] * dq[:, :, None] * dq[:, None, :]
                   + (d1 * 2.0 / radius ** 2)[:, None, None] * np.eye(n))
    return out


# -- scalar families -----------------------------------------------------------

def constant_scalar(value, n):
    return constant_field(float(value), n, name=f"const({value:g})")


def linear_scalar(value0, gradient, n):
    a = np.asarray(gradient, dtype=float)
    return SmoothField(lambda X: value0 + X @ a, n, (),
                       lambda X: np.broadcast_to(a, X.shape).copy(),
                       lambda X: np.zeros((X.shape[0], n, n)), name="linear")


def exp_linear_scalar(rate, n, offset=0.0, scale=1.0):
    """``scale * exp(rate . x + offset)``."""
    a = np.asarray(rate, dtype=float)

    def fn(X):
        return scale * np.exp(X @ a + offset)

    return SmoothField(fn, n, (), lambda X: fn(X)[:, None] * a,
                       lambda X: fn(X)[:, None, None] * np.outer(a, a), name="exp_linear")


def trig_scalar(value0, amplitude, wavevector, phase, n):
    """``value0 + amplitude * sin(k . x + phase)``."""
    k = np.asarray(wavevector, dtype=float)

    def arg(X):
        return X @ k + phase

    return SmoothField(lambda X: value0 + amplitude * np.sin(arg(X)), n, (),
                       lambda X: (amplitude * np.cos(arg(X)))[:, None] * k,
                       lambda X: (-amplitude * np.sin(arg(X)))[:, None, None] * np.outer(k, k),
                       name="trig")


def bump_scalar(amplitude, center, radius, n, base=1.0):
    """``base + amplitude * psi(x)`` with the mollifier psi supported in a ball."""
    center = np.asarray(center, dtype=float)
    return SmoothField(lambda X: base + amplitude * bump_value(X, center, radius), n, (),
                       lambda X: amplitude * bump_grad(X, center, radius),
                       lambda X: amplitude * bump_hess(X, center, radius), name="bump")


# -- stiffness families -------------------------------------------------------

def constant_stiffness(c):
    c = np.asarray(c, dtype=float)
    return constant_field(c, c.shape[0], name="stiffness")


def isotropic_gradient(lambda0, mu0, n, grad_lambda=None, grad_mu=None):
    """Isotropic stiffness with Lame parameters affine in x."""
    gl = np.zeros(n) if grad_lambda is None else np.asarray(grad_lambda, dtype=float)
    gm = np.zeros(n) if grad_mu is None else np.asarray(grad_mu, dtype=float)
    lam_part = isotropic_stiffness(1.0, 0.0, n, check=False)
    mu_part = isotropic_stiffness(0.0, 1.0, n, check=False)

    def fn(X):
        lam = lambda0 + X @ gl
        mu = mu0 + X @ gm
        return lam[:, None, None, None, None] * lam_part + mu[:, None, None, None, None] * mu_part

    def grad(X):
        d = np.einsum("a,ijkl->aijkl", gl, lam_part) + np.einsum("a,ijkl->aijkl", gm, mu_part)
        return np.broadcast_to(d, (X.shape[0],) + d.shape).copy()

    return SmoothField(fn, n, (n,) * 4, grad,
                       lambda X: np.zeros((X.shape[0], n, n) + (n,) * 4),
                       name="isotropic_gradient")


def _rotation_derivs(theta, n):
    """R(theta) and its first two theta-derivatives, rotating the x1-x2 plane."""
    c, s = np.cos(theta), np.sin(theta)
    N = theta.shape[0]
    R = np.zeros((N, n, n))
    dR = np.zeros((N, n, n))
    R[:, 0, 0], R[:, 0, 1], R[:, 1, 0], R[:, 1, 1] = c, -s, s, c
    dR[:, 0, 0], dR[:, 0, 1], dR[:, 1, 0], dR[:, 1, 1] = -s, -c, c, -s
    if n == 3:
        R[:, 2, 2] = 1.0
    ddR = -R.copy()
    if n == 3:
        ddR[:, 2, 2] = 0.0
    return R, dR, ddR


def _rot4(A, B, C, D, c0):
    return np.einsum("Nai,Nbj,Nck,Ndl,ijkl->Nabcd", A, B, C, D, c0, optimize=True)


def rotated_stiffness(base_voigt, angle0, angle_gradient, n):
    """A constant anisotropic tensor rotated in the x1-x2 plane by an angle
    affine in x (``angle0 + angle_gradient . x``)."""
    c0 = voigt_unpack(base_voigt)
    if c0.shape[0] != n:
        raise ValueError("Voigt size does not match dimension")
    kappa = np.asarray(angle_gradient, dtype=float)

    def fn(X):
        R, _, _ = _rotation_derivs(angle0 + X @ kappa, n)
        return enforce_symmetry(_rot4(R, R, R, R, c0))

    def dtheta(X):
        R, dR, _ = _rotation_derivs(angle0 + X @ kappa, n)
        return (_rot4(dR, R, R, R, c0) + _rot4(R, dR, R, R, c0)
                + _rot4(R, R, dR, R, c0) + _rot4(R, R, R, dR, c0))

    def ddtheta(X):
        R, dR, ddR = _rotation_derivs(angle0 + X @ kappa, n)
        mats = [R, R, R, R]
        total = 0.0
        for a in range(4):
            for b in range(4):
                m = list(mats)
                if a == b:
                    m[a] = ddR
                else:
                    m[a] = dR
                    m[b] = dR
                total = total + _rot4(*m, c0)
        return total

    # rounding in the rotations breaks the symmetries at the 1e-16 level; copy
    # orbit representatives so values and partials are exactly symmetric
    def grad(X):
        return enforce_symmetry(np.einsum("a,Nijkl->Naijkl", kappa, dtheta(X)))

    def hess(X):
        return enforce_symmetry(np.einsum("a,b,Nijkl->Nabijkl", kappa, kappa, ddtheta(X)))

    return SmoothField(fn, n, (n,) * 4, grad, hess, name="rotated")


def trig_stiffness(base, perturbation, amplitude, wavevector, phase=0.0):
    """``base + amplitude * sin(k . x + phase) * perturbation`` (both symmetrized)."""
    b = symmetrize(base)
    p = symmetrize(perturbation)
    n = b.shape[0]
    k = np.asarray(wavevector, dtype=float)

    def arg(X):
        return X @ k + phase

    return SmoothField(
        lambda X: b + (amplitude * np.sin(arg(X)))[:, None, None, None, None] * p,
        n, (n,) * 4,
        lambda X: np.einsum("N,a,ijkl->Naijkl", amplitude * np.cos(arg(X)), k, p),
        lambda X: np.einsum("N,a,b,ijkl->Nabijkl", -amplitude * np.sin(arg(X)), k, k, p),
        name="trig_stiffness")


# -- metric families ----------------------------------------------------------

def constant_metric(G):
    G = np.asarray(G, dtype=float)
    return constant_field(G, G.shape[0], name="constant_metric")


def conformal_exp_metric(rate, n):
    """``exp(2 a . x) g_E``."""
    a = np.asarray(rate, dtype=float)
    I = np.eye(n)

    def w(X):
        return np.exp(2.0 * X @ a)

    return SmoothField(lambda X: w(X)[:, None, None] * I, n, (n, n),
                       lambda X: np.einsum("N,a,ij->Naij", 2.0 * w(X), a, I),
                       lambda X: np.einsum("N,a,b,ij->Nabij", 4.0 * w(X), a, a, I),
                       name="conformal_exp")


def warped_metric(strength, n):
    """``diag(1, 1 + b x1^2, ...)``."""
    b = float(strength)

    def fn(X):
        g = np.zeros((X.shape[0], n, n))
        g[:, 0, 0] = 1.0
        for k in range(1, n):
            g[:, k, k] = 1.0 + b * X[:, 0] ** 2
        return g

    def grad(X):
        d = np.zeros((X.shape[0], n, n, n))
        for k in range(1, n):
            d[:, 0, k, k] = 2.0 * b * X[:, 0]
        return d

    def hess(X):
        d = np.zeros((X.shape[0], n, n, n, n))
        for k in range(1, n):
            d[:, 0, 0, k, k] = 2.0 * b
        return d

    return SmoothField(fn, n, (n, n), grad, hess, name="warped")


def flat_pullback_metric(eps):
    """``J^T J`` for the map ``x + eps (sin x2, sin x1)``: flat, not Euclidean."""
    e = float(eps)

    def jac(X):
        J = np.zeros((X.shape[0], 2, 2))
        J[:, 0, 0] = J[:, 1, 1] = 1.0
        J[:, 0, 1] = e * np.cos(X[:, 1])
        J[:, 1, 0] = e * np.cos(X[:, 0])
        return J

    def djac(X):
        d = np.zeros((X.shape[0], 2, 2, 2))
        d[:, 1, 0, 1] = -e * np.sin(X[:, 1])
        d[:, 0, 1, 0] = -e * np.sin(X[:, 0])
        return d

    def ddjac(X):
        d = np.zeros((X.shape[0], 2, 2, 2, 2))
        d[:, 1, 1, 0, 1] = -e * np.cos(X[:, 1])
        d[:, 0, 0, 1, 0] = -e * np.cos(X[:, 0])
        return d

    def fn(X):
        J = jac(X)
        return np.einsum("Nai,Naj->Nij", J, J)

    def grad(X):
        J, dJ = jac(X), djac(X)
        t = np.einsum("Nbai,Naj->Nbij", dJ, J)
        return t + np.swapaxes(t, 2, 3)

    def hess(X):
        J, dJ, ddJ = jac(X), djac(X), ddjac(X)
        t = np.einsum("Ncbai,Naj->Ncbij", ddJ, J) + np.einsum("Nbai,Ncaj->Ncbij", dJ, dJ)
        return t + np.swapaxes(t, 3, 4)

    return SmoothField(fn, 2, (2, 2), grad, hess, name="flat_pullback")


def trig_metric(base, amplitudes, wavevectors, phases):
    """``G0_ab + A_ab sin(k_ab . x + phi_ab)`` entrywise (symmetric data)."""
    G0 = np.asarray(base, dtype=float)
    A = np.asarray(amplitudes, dtype=float)
    K = np.asarray(wavevectors, dtype=float)
    P = np.asarray(phases, dtype=float)
    n = G0.shape[0]
    A = 0.5 * (A + A.T)
    K = 0.5 * (K + np.swapaxes(K, 0, 1))
    P = 0.5 * (P + P.T)

    def arg(X):
        return np.einsum("Nc,abc->Nab", X, K) + P

    return SmoothField(
        lambda X: G0 + A * np.sin(arg(X)), n, (n, n),
        lambda X: np.einsum("Nab,abc->Ncab", A * np.cos(arg(X)), K),
        lambda X: np.einsum("Nab,abc,abd->Ncdab", -A * np.sin(arg(X)), K, K),
        name="trig_metric")


# -- vector families (test displacements) ---------------------------------------

def trig_vector(amplitudes, wavevectors, phases):
    """``u^m = A_m sin(k_m . x + phi_m)``."""
    A = np.asarray(amplitudes, dtype=float)
    K = np.asarray(wavevectors, dtype=float)
    P = np.asarray(phases, dtype=float)
    n = A.shape[0]

    def arg(X):
        return X @ K.T + P

    return SmoothField(lambda X: A * np.sin(arg(X)), n, (n,),
                       lambda X: np.einsum("Nm,ma->Nam", A * np.cos(arg(X)), K),
                       lambda X: np.einsum("Nm,ma,mb->Nabm", -A * np.sin(arg(X)), K, K),
                       name="trig_vector")


def polynomial_vector(terms, n):
    """Sum of monomials; ``terms`` is a list of (component, coeff, powers)."""
    terms = [(int(m), float(cf), np.asarray(p, dtype=int)) for m, cf, p in terms]

    def mono(X, p):
        return np.prod(X ** p, axis=1)

    def fn(X):
        out = np.zeros((X.shape[0], n))
        for m, cf, p in terms:
            out[:, m] += cf * mono(X, p)
        return out

    def grad(X):
        out = np.zeros((X.shape[0], n, n))
        for m, cf, p in terms:
            for a in range(n):
                if p[a] == 0:
                    continue
                q = p.copy()
                q[a] -= 1
                out[:, a, m] += cf * p[a] * mono(X, q)
        return out

    def hess(X):
        out = np.zeros((X.shape[0], n, n, n))
        for m, cf, p in terms:
            for a in range(n):
                for b in range(n):
                    q = p.copy()
                    f = cf * q[a]
                    q[a] -= 1
                    if f == 0 or q[a] < 0:
                        continue
                    f *= q[b]
                    q[b] -= 1
                    if f == 0 or q[b] < 0:
                        continue
                    out[:, a, b, m] += f * mono(X, q)
        return out

    return SmoothField(fn, n, (n,), grad, hess, name="polynomial")


# -- config registries ----------------------------------------------------------

def _need(params, key, path):
    if key not in params:
        raise ConfigError("missing required key", f"{path}.{key}")
    return params[key]


def _check_keys(params, allowed, path):
    for key in params:
        if key not in allowed and key != "family":
            raise ConfigError("unknown key", f"{path}.{key}")


def build_scalar(spec, n, path="scalar"):
    spec = dict(spec)
    family = _need(spec, "family", path)
    if family == "constant":
        _check_keys(spec, {"value"}, path)
        return constant_scalar(_need(spec, "value", path), n)
    if family == "linear":
        _check_keys(spec, {"value", "gradient"}, path)
        return linear_scalar(_need(spec, "value", path), _need(spec, "gradient", path), n)
    if family == "exp_linear":
        _check_keys(spec, {"rate", "offset", "scale"}, path)
        return exp_linear_scalar(_need(spec, "rate", path), n, spec.get("offset", 0.0),
                                 spec.get("scale", 1.0))
    if family == "trig":
        _check_keys(spec, {"value", "amplitude", "wavevector", "phase"}, path)
        return trig_scalar(_need(spec, "value", path), _need(spec, "amplitude", path),
                           _need(spec, "wavevector", path), spec.get("phase", 0.0), n)
    if family == "bump":
        _check_keys(spec, {"amplitude", "center", "radius", "base"}, path)
        return bump_scalar(_need(spec, "amplitude", path), _need(spec, "center", path),
                           _need(spec, "radius", path), n, spec.get("base", 1.0))
    raise ConfigError(f"unknown scalar family {family!r}", f"{path}.family")


def build_stiffness(spec, n, path="stiffness"):
    spec = dict(spec)
    family = _need(spec, "family", path)
    if family == "isotropic":
        _check_keys(spec, {"lambda", "mu"}, path)
        return constant_stiffness(isotropic_stiffness(_need(spec, "lambda", path),
                                                      _need(spec, "mu", path), n))
    if family == "voigt":
        _check_keys(spec, {"rows"}, path)
        return constant_stiffness(voigt_unpack(_need(spec, "rows", path)))
    if family == "isotropic_gradient":
        _check_keys(spec, {"lambda", "mu", "grad_lambda", "grad_mu"}, path)
        return isotropic_gradient(_need(spec, "lambda", path), _need(spec, "mu", path), n,
                                  spec.get("grad_lambda"), spec.get("grad_mu"))
    if family == "rotated_orthotropic":
        _check_keys(spec, {"rows", "angle", "angle_gradient"}, path)
        return rotated_stiffness(_need(spec, "rows", path), spec.get("angle", 0.0),
                                 spec.get("angle_gradient", [0.0] * n), n)
    raise ConfigError(f"unknown stiffness family {family!r}", f"{path}.family")


def build_metric(spec, n, path="metric"):
    spec = dict(spec)
    family = _need(spec, "family", path)
    if family == "euclidean":
        _check_keys(spec, set(), path)
        return euclidean_metric(n)
    if family == "constant":
        _check_keys(spec, {"matrix"}, path)
        return constant_metric(_need(spec, "matrix", path))
    if family == "conformal_exp":
        _check_keys(spec, {"rate"}, path)
        return conformal_exp_metric(_need(spec, "rate", path), n)
    if family == "warped":
        _check_keys(spec, {"strength"}, path)
        return warped_metric(_need(spec, "strength", path), n)
    if family == "flat_pullback":
        _check_keys(spec, {"eps"}, path)
        if n != 2:
            raise ConfigError("flat_pullback is two-dimensional", f"{path}.family")
        return flat_pullback_metric(_need(spec, "eps", path))
    if family == "trig":
        _check_keys(spec, {"base", "amplitudes", "wavevectors", "phases"}, path)
        return trig_metric(_need(spec, "base", path), _need(spec, "amplitudes", path),
                           _need(spec, "wavevectors", path), _need(spec, "phases", path))
    raise ConfigError(f"unknown metric family {family!r}", f"{path}.family")


# Five non-Euclidean metric families used by the operator cross-checks.
def metric_battery(n=2):
    check_dimension(n)
    out = {
        "conformal_exp": conformal_exp_metric([1.0] + [0.0] * (n - 1), n),
        "warped": warped_metric(0.8, n),
        "constant_aniso": constant_metric(np.diag(np.arange(1, n + 1, dtype=float))
                                          + 0.3 * (np.ones((n, n)) - np.eye(n))),
        "trig": trig_metric(np.eye(n) * 1.5, 0.3 * np.ones((n, n)),
                            np.tile(np.arange(1, n + 1, dtype=float), (n, n, 1)),
                            np.zeros((n, n))),
    }
    if n == 2:
        out["flat_pullback"] = flat_pullback_metric(0.4)
    else:
        out["conformal_exp_diag"] = conformal_exp_metric([0.5, -0.3, 0.2], n)
    return out
