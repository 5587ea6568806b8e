"""
Stationary kernels as functions of the lag tau = x - x'.

Two layers live here. The functional layer (``k_se``, ``k_sm_1d`` ...) takes
constrained parameters and is what the metrics and tests reason about. The
object layer (:class:`Kernel1D` and friends) works on unconstrained raw
vectors, where every positive parameter is stored as a logarithm, and provides
analytic derivatives with respect to those raw entries. A
:class:`SeparableKernel` holds one 1-D kernel per grid dimension and is what the
Kronecker layer consumes.
"""
import logging
from abc import ABC, abstractmethod
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.stats import norm

from gpatt.core.errors import ParameterError, ShapeError
from gpatt.schemas.kernel import (
    HyperParams,
    KernelNode,
    KernelSpec,
    Matern32Node,
    PeriodicNode,
    ProductNode,
    RQNode,
    SENode,
    SMComponent,
    SMKernel1D,
    SMNode,
    SMPKernel,
    SumNode,
)

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)
MU_FLOOR = 1e-8
LOG_MU_FLOOR = np.log(MU_FLOOR)


def _require_positive(**params: float) -> None:
    for name, value in params.items():
        if not np.all(np.asarray(value) > 0):
            raise ParameterError(f"{name} must be positive, got {value!r}")


# Functional layer

def k_se(tau, lengthscale: float):
    """exp(-0.5 |tau|^2 / l^2); the last axis of ``tau`` holds its components."""
    _require_positive(lengthscale=lengthscale)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    r2 = np.sum(tau * tau, axis=-1)
    return np.exp(-0.5 * r2 / lengthscale ** 2)


def _sm_arrays(params: SMKernel1D) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    w2 = np.array([c.weight_sq for c in params.components])
    mu = np.array([c.mean_freq for c in params.components])
    v = np.array([c.var_freq for c in params.components])
    return w2, mu, v


def _sm_value(tau: np.ndarray, w2: np.ndarray, mu: np.ndarray, v: np.ndarray) -> np.ndarray:
    t = np.asarray(tau, dtype=float)[..., None]
    return np.sum(w2 * np.exp(-2.0 * np.pi ** 2 * t * t * v) * np.cos(2.0 * np.pi * t * mu), axis=-1)


def k_sm_1d(tau, params: SMKernel1D):
    """Spectral mixture kernel: sum_a w_a^2 exp(-2 pi^2 tau^2 s_a^2) cos(2 pi tau mu_a)."""
    return _sm_value(tau, *_sm_arrays(params))


def k_smp(tau, kernel: SMPKernel):
    """Product over dimensions of per-dimension spectral mixtures."""
    tau = np.asarray(tau, dtype=float)
    if tau.ndim == 0 or tau.shape[-1] != kernel.P:
        raise ShapeError(f"tau must have {kernel.P} components on its last axis, got shape {tau.shape}")
    value = np.ones(tau.shape[:-1])
    for p, dim in enumerate(kernel.per_dim):
        value = value * k_sm_1d(tau[..., p], dim)
    return value


def k_matern32(tau, lengthscale: float):
    _require_positive(lengthscale=lengthscale)
    r = SQRT3 * np.abs(np.asarray(tau, dtype=float)) / lengthscale
    return (1.0 + r) * np.exp(-r)


def k_rq(tau, lengthscale: float, alpha: float):
    _require_positive(lengthscale=lengthscale, alpha=alpha)
    tau = np.asarray(tau, dtype=float)
    return np.power(1.0 + tau * tau / (2.0 * alpha * lengthscale ** 2), -alpha)


def k_periodic(tau, omega: float, lengthscale: float):
    _require_positive(omega=omega, lengthscale=lengthscale)
    s = np.sin(np.pi * np.asarray(tau, dtype=float) * omega)
    return np.exp(-2.0 * s * s / lengthscale ** 2)


def sm_spectral_density(s, params: SMKernel1D):
    """Symmetrised Gaussian mixture; integrates to k(0)."""
    w2, mu, v = _sm_arrays(params)
    return _sm_density(s, w2, mu, v)


def _sm_density(s, w2, mu, v):
    s = np.asarray(s, dtype=float)[..., None]
    sd = np.sqrt(v)
    return np.sum(w2 * 0.5 * (norm.pdf(s, mu, sd) + norm.pdf(-s, mu, sd)), axis=-1)


def se_spectral_density(s, lengthscale: float):
    _require_positive(lengthscale=lengthscale)
    s = np.asarray(s, dtype=float)
    return np.sqrt(2.0 * np.pi) * lengthscale * np.exp(-2.0 * np.pi ** 2 * lengthscale ** 2 * s * s)


def matern32_spectral_density(s, lengthscale: float):
    _require_positive(lengthscale=lengthscale)
    lam = SQRT3 / lengthscale
    s = np.asarray(s, dtype=float)
    return 4.0 * lam ** 3 / (lam ** 2 + 4.0 * np.pi ** 2 * s * s) ** 2


def numeric_spectral_density(kernel_fn: Callable[[float], float], s) -> np.ndarray:
    """Cosine transform 2 * int_0^inf k(t) cos(2 pi s t) dt, evaluated pointwise."""
    out = []
    for freq in np.atleast_1d(np.asarray(s, dtype=float)):
        fn = lambda t: float(kernel_fn(t))
        if freq == 0.0:
            val, _ = integrate.quad(fn, 0.0, np.inf, limit=200)
        else:
            val, _ = integrate.quad(fn, 0.0, np.inf, weight="cos", wvar=2.0 * np.pi * abs(freq), limlst=100)
        out.append(2.0 * val)
    return np.reshape(np.array(out), np.shape(s))


def gram_1d(kernel_1d: Callable[[np.ndarray], np.ndarray], axis) -> np.ndarray:
    """K[i, j] = k(axis[i] - axis[j]) for a stationary 1-D kernel."""
    axis = np.asarray(axis, dtype=float).ravel()
    K = np.asarray(kernel_1d(np.subtract.outer(axis, axis)), dtype=float)
    return 0.5 * (K + K.T)


def kernel_grad(kernel: "Kernel1D", tau, raw: Optional[np.ndarray] = None) -> np.ndarray:
    """Derivatives of k(tau) with respect to each raw (log-scale) parameter."""
    return kernel.grad(np.asarray(tau, dtype=float), kernel.default_raw if raw is None else raw)


# Object layer

class Kernel1D(ABC):
    """Stationary kernel on one input dimension, parameterised by a raw vector."""

    param_names: Tuple[str, ...] = ()

    def __init__(self, raw: Optional[Sequence[float]] = None):
        raw = np.zeros(self.n_params) if raw is None else np.asarray(raw, dtype=float)
        if raw.shape != (self.n_params,):
            raise ShapeError(f"{type(self).__name__} expects {self.n_params} raw parameters, got {raw.shape}")
        raw.setflags(write=False)
        self.default_raw = raw

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @abstractmethod
    def value(self, tau: np.ndarray, raw: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def grad(self, tau: np.ndarray, raw: np.ndarray) -> np.ndarray:
        """Array of shape (n_params, *tau.shape)."""

    def spectral_density(self, s, raw: np.ndarray) -> np.ndarray:
        return numeric_spectral_density(lambda t: self.value(np.asarray(t), raw), s)

    def __call__(self, tau, raw: Optional[np.ndarray] = None) -> np.ndarray:
        return self.value(np.asarray(tau, dtype=float), self.default_raw if raw is None else raw)

    def k0(self, raw: np.ndarray) -> float:
        return float(self.value(np.zeros(1), raw)[0])


class SEKernel1D(Kernel1D):
    param_names = ("log_lengthscale",)

    def value(self, tau, raw):
        ell = np.exp(raw[0])
        return np.exp(-0.5 * tau * tau / ell ** 2)

    def grad(self, tau, raw):
        ell = np.exp(raw[0])
        r2 = tau * tau / ell ** 2
        return (np.exp(-0.5 * r2) * r2)[None]

    def spectral_density(self, s, raw):
        return se_spectral_density(s, float(np.exp(raw[0])))


class Matern32Kernel1D(Kernel1D):
    param_names = ("log_lengthscale",)

    def value(self, tau, raw):
        return k_matern32(tau, float(np.exp(raw[0])))

    def grad(self, tau, raw):
        r = SQRT3 * np.abs(tau) / np.exp(raw[0])
        return (r * r * np.exp(-r))[None]

    def spectral_density(self, s, raw):
        return matern32_spectral_density(s, float(np.exp(raw[0])))


class RQKernel1D(Kernel1D):
    param_names = ("log_lengthscale", "log_alpha")

    def value(self, tau, raw):
        return k_rq(tau, float(np.exp(raw[0])), float(np.exp(raw[1])))

    def grad(self, tau, raw):
        ell, alpha = np.exp(raw[0]), np.exp(raw[1])
        z = tau * tau / (2.0 * alpha * ell ** 2)
        k = np.power(1.0 + z, -alpha)
        d_ell = k * 2.0 * alpha * z / (1.0 + z)
        d_alpha = k * alpha * (z / (1.0 + z) - np.log1p(z))
        return np.stack([d_ell, d_alpha])


class PeriodicKernel1D(Kernel1D):
    param_names = ("log_omega", "log_lengthscale")

    def value(self, tau, raw):
        return k_periodic(tau, float(np.exp(raw[0])), float(np.exp(raw[1])))

    def grad(self, tau, raw):
        omega, ell = np.exp(raw[0]), np.exp(raw[1])
        phase = np.pi * tau * omega
        s = np.sin(phase)
        k = np.exp(-2.0 * s * s / ell ** 2)
        d_omega = -k * (2.0 / ell ** 2) * np.sin(2.0 * phase) * phase
        d_ell = k * 4.0 * s * s / ell ** 2
        return np.stack([d_omega, d_ell])


class SpectralMixture1D(Kernel1D):
    """A-component spectral mixture; raw is component-major (log w^2, log mu, log s^2)."""

    def __init__(self, A: int, raw: Optional[Sequence[float]] = None):
        if A < 1:
            raise ParameterError("a spectral mixture needs at least one component")
        self.A = A
        self.param_names = tuple(
            f"sm{a}.{name}" for a in range(A)
            for name in ("log_weight_sq", "log_mean_freq", "log_var_freq"))
        super().__init__(raw)

    def unpack(self, raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(raw, dtype=float).reshape(self.A, 3)
        return np.exp(r[:, 0]), np.exp(np.maximum(r[:, 1], LOG_MU_FLOOR)), np.exp(r[:, 2])

    @staticmethod
    def pack(params: SMKernel1D) -> np.ndarray:
        rows = [[np.log(c.weight_sq), np.log(max(c.mean_freq, MU_FLOOR)), np.log(c.var_freq)]
                for c in params.components]
        return np.asarray(rows, dtype=float).ravel()

    def components(self, raw: np.ndarray) -> SMKernel1D:
        w2, mu, v = self.unpack(raw)
        return SMKernel1D(components=[
            SMComponent(weight_sq=float(a), mean_freq=float(b), var_freq=float(c))
            for a, b, c in zip(w2, mu, v)])

    def value(self, tau, raw):
        return _sm_value(tau, *self.unpack(raw))

    def grad(self, tau, raw):
        w2, mu, v = self.unpack(raw)
        t = tau[..., None]
        envelope = np.exp(-2.0 * np.pi ** 2 * t * t * v)
        phase = 2.0 * np.pi * t * mu
        d_w = w2 * envelope * np.cos(phase)
        d_mu = -w2 * envelope * np.sin(phase) * 2.0 * np.pi * t * mu
        d_mu = np.where(np.asarray(raw).reshape(self.A, 3)[:, 1] < LOG_MU_FLOOR, 0.0, d_mu)
        d_v = d_w * (-2.0 * np.pi ** 2 * t * t * v)
        stacked = np.stack([d_w, d_mu, d_v], axis=-1)       # (..., A, 3)
        return np.moveaxis(stacked.reshape(tau.shape + (3 * self.A,)), -1, 0)

    def spectral_density(self, s, raw):
        return _sm_density(s, *self.unpack(raw))


class ScaledKernel(Kernel1D):
    """variance * base; the variance is the first raw entry."""

    def __init__(self, base: Kernel1D, raw: Optional[Sequence[float]] = None):
        self.base = base
        self.param_names = ("log_variance",) + tuple(f"base.{n}" for n in base.param_names)
        if raw is None:
            raw = np.concatenate([[0.0], base.default_raw])
        super().__init__(raw)

    def value(self, tau, raw):
        return np.exp(raw[0]) * self.base.value(tau, raw[1:])

    def grad(self, tau, raw):
        scale = np.exp(raw[0])
        return np.concatenate([(scale * self.base.value(tau, raw[1:]))[None],
                               scale * self.base.grad(tau, raw[1:])])

    def spectral_density(self, s, raw):
        return np.exp(raw[0]) * self.base.spectral_density(s, raw[1:])


class _Composite(Kernel1D):
    def __init__(self, children: Sequence[Kernel1D]):
        if not children:
            raise ParameterError("a composite kernel needs children")
        self.children = list(children)
        self.param_names = tuple(f"{i}.{n}" for i, c in enumerate(self.children) for n in c.param_names)
        bounds = np.cumsum([0] + [c.n_params for c in self.children])
        self._slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        super().__init__(np.concatenate([c.default_raw for c in self.children]))


class SumKernel(_Composite):
    def value(self, tau, raw):
        return sum(c.value(tau, raw[s]) for c, s in zip(self.children, self._slices))

    def grad(self, tau, raw):
        return np.concatenate([c.grad(tau, raw[s]) for c, s in zip(self.children, self._slices)])

    def spectral_density(self, s, raw):
        return sum(c.spectral_density(s, raw[sl]) for c, sl in zip(self.children, self._slices))


class ProductKernel(_Composite):
    def value(self, tau, raw):
        out = np.ones_like(tau, dtype=float)
        for c, s in zip(self.children, self._slices):
            out = out * c.value(tau, raw[s])
        return out

    def grad(self, tau, raw):
        values = [c.value(tau, raw[s]) for c, s in zip(self.children, self._slices)]
        parts = []
        for i, (c, s) in enumerate(zip(self.children, self._slices)):
            others = np.ones_like(tau, dtype=float)
            for j, v in enumerate(values):
                if j != i:
                    others = others * v
            parts.append(c.grad(tau, raw[s]) * others)
        return np.concatenate(parts)


class SeparableKernel:
    """k(tau) = prod_p k_p(tau_p), one 1-D kernel per grid dimension."""

    def __init__(self, per_dim: Sequence[Kernel1D], family: str = "separable"):
        if not per_dim:
            raise ParameterError("a separable kernel needs at least one dimension")
        self.per_dim = list(per_dim)
        self.family = family
        bounds = np.cumsum([0] + [k.n_params for k in self.per_dim])
        self.slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    @property
    def P(self) -> int:
        return len(self.per_dim)

    @property
    def n_params(self) -> int:
        return self.slices[-1].stop

    @property
    def default_raw(self) -> np.ndarray:
        return np.concatenate([k.default_raw for k in self.per_dim])

    def layout(self) -> Dict[str, int]:
        layout = {}
        for p, (k, s) in enumerate(zip(self.per_dim, self.slices)):
            for offset, name in enumerate(k.param_names):
                layout[f"d{p}.{name}"] = s.start + offset
        return layout

    def hypers(self, noise_var: float, raw: Optional[np.ndarray] = None) -> HyperParams:
        _require_positive(noise_var=noise_var)
        raw = self.default_raw if raw is None else np.asarray(raw, dtype=float)
        return HyperParams(raw=raw, layout=self.layout(), noise_raw=float(np.log(noise_var)))

    def split(self, raw: np.ndarray) -> List[np.ndarray]:
        return [np.asarray(raw)[s] for s in self.slices]

    def value(self, tau, raw: np.ndarray) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        if tau.ndim == 0 or tau.shape[-1] != self.P:
            raise ShapeError(f"tau must have {self.P} components on its last axis, got shape {tau.shape}")
        out = np.ones(tau.shape[:-1])
        for p, (k, r) in enumerate(zip(self.per_dim, self.split(raw))):
            out = out * k.value(tau[..., p], r)
        return out

    def k0(self, raw: np.ndarray) -> float:
        return float(np.prod([k.k0(r) for k, r in zip(self.per_dim, self.split(raw))]))

    def grams(self, axes: Sequence[np.ndarray], raw: np.ndarray) -> List[np.ndarray]:
        return [gram_1d(partial(k.value, raw=r), axis)
                for k, r, axis in zip(self.per_dim, self.split(raw), axes)]

    def gram_grads(self, axes: Sequence[np.ndarray], raw: np.ndarray) -> List[np.ndarray]:
        """Per dimension, an array (n_params_p, n_p, n_p) of gram derivatives."""
        out = []
        for k, r, axis in zip(self.per_dim, self.split(raw), axes):
            axis = np.asarray(axis, dtype=float)
            G = k.grad(np.subtract.outer(axis, axis), r)
            out.append(0.5 * (G + np.swapaxes(G, 1, 2)))
        return out

    def spectral_mixture(self, raw: np.ndarray) -> SMPKernel:
        if not all(isinstance(k, SpectralMixture1D) for k in self.per_dim):
            raise ParameterError(f"a {self.family} kernel is not a spectral mixture product")
        return SMPKernel(per_dim=[k.components(r) for k, r in zip(self.per_dim, self.split(raw))])


# Builders

def smp_kernel(P: int, A: int) -> SeparableKernel:
    return SeparableKernel([SpectralMixture1D(A) for _ in range(P)], family="smp")


def smp_from_schema(kernel: SMPKernel) -> Tuple[SeparableKernel, np.ndarray]:
    sep = smp_kernel(kernel.P, kernel.A)
    raw = np.concatenate([SpectralMixture1D.pack(dim) for dim in kernel.per_dim])
    return sep, raw


_SMOOTHERS = {"se": SEKernel1D, "matern32": Matern32Kernel1D, "rq": RQKernel1D}


def smoother_kernel(family: str, P: int) -> SeparableKernel:
    """Product of one smoothing kernel per dimension with a single signal variance."""
    try:
        cls = _SMOOTHERS[family]
    except KeyError:
        raise ParameterError(f"unknown smoothing family {family!r}") from None
    dims: List[Kernel1D] = [cls() for _ in range(P)]
    dims[0] = ScaledKernel(dims[0])
    return SeparableKernel(dims, family=family)


def family_kernel(family: str, P: int, A: int = 1) -> SeparableKernel:
    if family == "smp":
        return smp_kernel(P, A)
    return smoother_kernel(family, P)


def _leaf(kernel: Kernel1D, variance: float) -> Kernel1D:
    if variance == 1.0:
        return kernel
    return ScaledKernel(kernel, raw=np.concatenate([[np.log(variance)], kernel.default_raw]))


def build_kernel(node: KernelNode) -> Kernel1D:
    """Instantiate a compositional tree with its recorded parameter values."""
    if isinstance(node, SENode):
        return _leaf(SEKernel1D([np.log(node.lengthscale)]), node.variance)
    if isinstance(node, Matern32Node):
        return _leaf(Matern32Kernel1D([np.log(node.lengthscale)]), node.variance)
    if isinstance(node, RQNode):
        return _leaf(RQKernel1D([np.log(node.lengthscale), np.log(node.alpha)]), node.variance)
    if isinstance(node, PeriodicNode):
        return _leaf(PeriodicKernel1D([np.log(node.omega), np.log(node.lengthscale)]), node.variance)
    if isinstance(node, SMNode):
        params = SMKernel1D(components=node.components)
        return SpectralMixture1D(params.A, SpectralMixture1D.pack(params))
    if isinstance(node, SumNode):
        return SumKernel([build_kernel(c) for c in node.children])
    if isinstance(node, ProductNode):
        return ProductKernel([build_kernel(c) for c in node.children])
    raise ParameterError(f"unsupported kernel node {node!r}")


def build_from_spec(spec: KernelSpec, P: Optional[int] = None, A: Optional[int] = None) -> SeparableKernel:
    """Kernel for a spec; ``P``/``A`` fill in what the spec leaves open."""
    if spec.type == "separable":
        kernel = SeparableKernel([build_kernel(node) for node in spec.dims])
        if P is not None and P != kernel.P:
            raise ShapeError(f"kernel has {kernel.P} dimensions, data has {P}")
        return kernel
    dims = spec.P or P
    if dims is None:
        raise ShapeError("the kernel spec does not say how many dimensions it has")
    if P is not None and dims != P:
        raise ShapeError(f"kernel has {dims} dimensions, data has {P}")
    tree = spec.tree()
    if tree is not None:
        return SeparableKernel([build_kernel(tree) for _ in range(dims)])
    return family_kernel(spec.type, dims, spec.A or A or 1)
