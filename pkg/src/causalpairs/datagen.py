"""Deterministic generator of synthetic high-dimensional representation pairs.

Each observational sample is itself a small dataset of m feature pairs
(X, Y), produced by ancestral sampling: an exogenous variable drawn from a
Gaussian mixture, pushed through one of five causal function classes with
fresh random parameters, corrupted with additive Gaussian noise, and
standardized column-wise after every operation. Six graph scenarios cover
causal, anti-causal, and no-relation cases, with and without an unobserved
confounder.

All randomness flows through explicit numpy Generators; per-sample
substreams are derived with a SplitMix64-style mix of (master key, index) so
generation is reproducible and parallelizable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .engine import NumericError

__all__ = [
    "FunctionClass",
    "GraphKind",
    "GmmSpec",
    "GenConfig",
    "Sample",
    "DegenerateColumnError",
    "substream",
    "sample_gmm",
    "draw_function_params",
    "apply_causal_function",
    "standardize",
    "add_noise_and_standardize",
    "generate_sample",
    "generate_epoch",
    "save_dataset",
    "load_dataset",
]


class DegenerateColumnError(NumericError):
    """A column had zero variance even after resampling the noise."""


class FunctionClass(Enum):
    LINEAR = "linear"
    HADAMARD = "hadamard"
    BILINEAR = "bilinear"
    CUBIC_SPLINE = "cubic_spline"
    MLP = "mlp"

    def one_hot(self) -> np.ndarray:
        v = np.zeros(5)
        v[_FUNC_ORDER.index(self)] = 1.0
        return v


_FUNC_ORDER = [
    FunctionClass.LINEAR,
    FunctionClass.HADAMARD,
    FunctionClass.BILINEAR,
    FunctionClass.CUBIC_SPLINE,
    FunctionClass.MLP,
]


class GraphKind(Enum):
    """The six observable pairwise scenarios; the seventh (common effect)
    is observationally equivalent to G6 and never constructed."""

    G1 = "G1"  # X -> Y
    G2 = "G2"  # X <- Y
    G3 = "G3"  # independent
    G4 = "G4"  # Z -> X, (X, Z) -> Y
    G5 = "G5"  # Z -> Y, (Y, Z) -> X
    G6 = "G6"  # Z -> X, Z -> Y

    @property
    def label(self) -> int:
        return {"G1": 1, "G2": 2, "G3": 0, "G4": 1, "G5": 2, "G6": 0}[self.value]

    @property
    def confounded(self) -> bool:
        return self.value in ("G4", "G5", "G6")


@dataclass
class GmmSpec:
    """Diagonal Gaussian mixture used for the exogenous variable."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    variances: np.ndarray  # (K, d), all > 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.variances <= 0):
            raise ValueError("mixture variances must be positive")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    @staticmethod
    def default(d: int, rng: np.random.Generator) -> "GmmSpec":
        k = 3
        w = rng.dirichlet(np.ones(k))
        mu = rng.normal(0.0, 2.0, size=(k, d))
        var = rng.uniform(0.5, 1.5, size=(k, d))
        return GmmSpec(w, mu, var)


@dataclass
class GenConfig:
    dim: int = 8
    pairs: int = 100
    noise_var_high: float = 0.1
    spline_knots: tuple[int, int] = (3, 6)
    mlp_depth: tuple[int, int] = (0, 3)
    mlp_width: tuple[int, int] = (8, 20)
    gmm: GmmSpec | None = None
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2 or self.pairs < 2:
            raise ValueError("dim and pairs must both be >= 2")
        if self.gmm is None:
            self.gmm = GmmSpec.default(self.dim, np.random.default_rng(substream(self.seed, 0)))


@dataclass
class Sample:
    """One observational dataset: m standardized pairs plus its labels."""

    x: np.ndarray  # (m, d)
    y: np.ndarray  # (m, d)
    label: int
    graph: GraphKind
    func: FunctionClass

    @property
    def m(self) -> int:
        return self.x.shape[0]

    def func_one_hot(self) -> np.ndarray:
        return self.func.one_hot()

    def swapped(self) -> "Sample":
        flipped = {1: 2, 2: 1, 0: 0}[self.label]
        graph = {"G1": "G2", "G2": "G1", "G4": "G5", "G5": "G4"}.get(self.graph.value, self.graph.value)
        return Sample(self.y, self.x, flipped, GraphKind(graph), self.func)


def substream(master: int, index: int) -> int:
    """SplitMix64-style mix of (master seed, index) into a 64-bit stream key."""
    mask = 2**64 - 1
    z = (master * 0x9E3779B97F4A7C15 + index) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


def sample_gmm(spec: GmmSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    comps = rng.choice(len(spec.weights), size=m, p=spec.weights)
    noise = rng.standard_normal((m, spec.dim))
    return spec.means[comps] + noise * np.sqrt(spec.variances[comps])


def standardize(mat: np.ndarray) -> np.ndarray:
    """Column-standardize to zero mean, unit (population) variance."""
    mu = mat.mean(axis=0)
    sd = mat.std(axis=0)
    if np.any(sd < 1e-12):
        raise DegenerateColumnError("zero-variance column during standardization")
    return (mat - mu) / sd


def add_noise_and_standardize(mat: np.ndarray, v: float, rng: np.random.Generator) -> np.ndarray:
    """Add iid N(0, v) entries and standardize; resample the noise once if a
    column degenerates."""
    if not 0 < v <= 0.1:
        raise ValueError("noise variance must lie in (0, 0.1]")
    sd = np.sqrt(v)
    for _ in range(2):
        try:
            return standardize(mat + rng.normal(0.0, sd, size=mat.shape))
        except DegenerateColumnError:
            continue
    raise DegenerateColumnError("column stayed degenerate after resampling noise")


# ---------------------------------------------------------------------------
# causal function classes
# ---------------------------------------------------------------------------


def draw_function_params(func: FunctionClass, k_in: int, d_out: int, cfg: GenConfig, rng: np.random.Generator):
    """Fresh N(0, 1) parameters for one causal function application."""
    if func is FunctionClass.LINEAR:
        return {"A": rng.standard_normal((d_out, k_in))}
    if func is FunctionClass.HADAMARD:
        return {"A": rng.standard_normal((d_out, k_in)), "B": rng.standard_normal((d_out, k_in))}
    if func is FunctionClass.BILINEAR:
        return {"A": rng.standard_normal((d_out, k_in, k_in))}
    if func is FunctionClass.CUBIC_SPLINE:
        if k_in != d_out:
            raise ValueError("spline maps coordinates one-to-one; k_in must equal d_out")
        lo, hi = cfg.spline_knots
        knots = []
        for _ in range(d_out):
            k = int(rng.integers(lo, hi + 1))
            xs = np.sort(rng.standard_normal(k))
            # enforce distinct abscissas for the Hermite intervals
            xs += np.arange(k) * 1e-9
            ys = rng.standard_normal(k)
            knots.append((xs, ys))
        return {"knots": knots}
    if func is FunctionClass.MLP:
        depth = int(rng.integers(cfg.mlp_depth[0], cfg.mlp_depth[1] + 1))
        width = int(rng.integers(cfg.mlp_width[0], cfg.mlp_width[1] + 1))
        dims = [k_in] + [width] * depth + [d_out]
        return {"weights": [rng.standard_normal((dims[i], dims[i + 1])) for i in range(len(dims) - 1)]}
    raise ValueError(func)


def _catmull_rom_eval(xs: np.ndarray, ys: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Cubic Hermite interpolation with Catmull-Rom tangents and linear
    extrapolation beyond the outermost knots."""
    k = len(xs)
    if k == 1:
        return np.full_like(t, ys[0])
    tang = np.empty(k)
    tang[1:-1] = (ys[2:] - ys[:-2]) / (xs[2:] - xs[:-2])
    tang[0] = (ys[1] - ys[0]) / (xs[1] - xs[0])
    tang[-1] = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])

    idx = np.clip(np.searchsorted(xs, t) - 1, 0, k - 2)
    x0, x1 = xs[idx], xs[idx + 1]
    y0, y1 = ys[idx], ys[idx + 1]
    m0, m1 = tang[idx], tang[idx + 1]
    h = x1 - x0
    s = (t - x0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    out = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1

    below = t < xs[0]
    above = t > xs[-1]
    out[below] = ys[0] + tang[0] * (t[below] - xs[0])
    out[above] = ys[-1] + tang[-1] * (t[above] - xs[-1])
    return out


def apply_causal_function(func: FunctionClass, params, mat: np.ndarray) -> np.ndarray:
    """Apply one causal function to an (m, k) input, producing the pre-noise
    (m, d) effect matrix."""
    if func is FunctionClass.LINEAR:
        return mat @ params["A"].T
    if func is FunctionClass.HADAMARD:
        return (mat * mat) @ params["A"].T + mat @ params["B"].T
    if func is FunctionClass.BILINEAR:
        # output coordinate j is the bilinear form x^T A_j x per row
        t = np.tensordot(mat, params["A"], axes=([1], [1]))  # (m, d_out, k)
        return np.sum(t * mat[:, None, :], axis=2)
    if func is FunctionClass.CUBIC_SPLINE:
        knots = params["knots"]
        if mat.shape[1] != len(knots):
            raise ValueError("spline input width mismatch")
        cols = [_catmull_rom_eval(xs, ys, mat[:, j]) for j, (xs, ys) in enumerate(knots)]
        return np.stack(cols, axis=1)
    if func is FunctionClass.MLP:
        h = mat
        ws = params["weights"]
        for w in ws[:-1]:
            h = np.tanh(h @ w)
        return h @ ws[-1]
    raise ValueError(func)


# ---------------------------------------------------------------------------
# sample generation
# ---------------------------------------------------------------------------


def _effect_of(func, cfg, source, v, rng):
    """One generation step: draw params, apply, add noise, standardize."""
    params = draw_function_params(func, source.shape[1], cfg.dim, cfg, rng)
    return add_noise_and_standardize(apply_causal_function(func, params, source), v, rng)


def _spline_sum_effect(cfg, x, z, v, rng):
    """Confounded spline case: independent splines of cause and confounder."""
    px = draw_function_params(FunctionClass.CUBIC_SPLINE, cfg.dim, cfg.dim, cfg, rng)
    pz = draw_function_params(FunctionClass.CUBIC_SPLINE, cfg.dim, cfg.dim, cfg, rng)
    raw = apply_causal_function(FunctionClass.CUBIC_SPLINE, px, x) + apply_causal_function(
        FunctionClass.CUBIC_SPLINE, pz, z
    )
    return add_noise_and_standardize(raw, v, rng)


def _initial_cause(func, cfg, v, rng):
    """Exogenous mixture draw pushed through the sample's function class."""
    w = standardize(sample_gmm(cfg.gmm, cfg.pairs, rng))
    return _effect_of(func, cfg, w, v, rng)


def generate_sample(graph: GraphKind, func: FunctionClass, cfg: GenConfig, rng: np.random.Generator) -> Sample:
    """Generate one observational sample following the graph's wiring."""
    v = float(rng.uniform(0.0, cfg.noise_var_high))
    v = max(v, 1e-12)

    if graph in (GraphKind.G1, GraphKind.G2):
        cause = _initial_cause(func, cfg, v, rng)
        effect = _effect_of(func, cfg, cause, v, rng)
        x, y = (cause, effect) if graph is GraphKind.G1 else (effect, cause)
    elif graph is GraphKind.G3:
        x = _initial_cause(func, cfg, v, rng)
        y = _initial_cause(func, cfg, v, rng)
    elif graph in (GraphKind.G4, GraphKind.G5):
        w = standardize(sample_gmm(cfg.gmm, cfg.pairs, rng))
        z = _effect_of(func, cfg, w, v, rng)
        cause = _effect_of(func, cfg, z, v, rng)
        if func is FunctionClass.CUBIC_SPLINE:
            effect = _spline_sum_effect(cfg, cause, z, v, rng)
        else:
            effect = _effect_of(func, cfg, np.concatenate([cause, z], axis=1), v, rng)
        x, y = (cause, effect) if graph is GraphKind.G4 else (effect, cause)
    elif graph is GraphKind.G6:
        w = standardize(sample_gmm(cfg.gmm, cfg.pairs, rng))
        z = _effect_of(func, cfg, w, v, rng)
        x = _effect_of(func, cfg, z, v, rng)
        y = _effect_of(func, cfg, z, v, rng)
    else:
        raise ValueError(graph)

    return Sample(x=x, y=y, label=graph.label, graph=graph, func=func)


_GRAPHS = [GraphKind.G1, GraphKind.G2, GraphKind.G3, GraphKind.G4, GraphKind.G5, GraphKind.G6]


def generate_epoch(cfg: GenConfig, rng: np.random.Generator, n: int = 1000, exclude: FunctionClass | None = None, funcs=None):
    """Yield ``n`` fresh samples: graphs uniform over G1-G6, function classes
    uniform over the non-excluded set (or an explicit ``funcs`` list), new
    parameters per sample."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if funcs is None:
        funcs = [f for f in _FUNC_ORDER if f is not exclude]
    elif exclude is not None:
        raise ValueError("pass either exclude or funcs, not both")
    epoch_key = int(rng.integers(0, 2**63))
    for i in range(n):
        sub = np.random.default_rng(substream(epoch_key, i))
        graph = _GRAPHS[int(sub.integers(0, len(_GRAPHS)))]
        func = funcs[int(sub.integers(0, len(funcs)))]
        yield generate_sample(graph, func, cfg, sub)


# ---------------------------------------------------------------------------
# dataset container
# ---------------------------------------------------------------------------

_MAGIC = b"NCIDATA1"


def save_dataset(path, samples: list[Sample]) -> None:
    """Write samples to the binary container: magic, u32-LE header length,
    JSON header, then float32-LE payload (per sample: X block, Y block)."""
    import json

    if not samples:
        raise ValueError("cannot save an empty dataset")
    m, d = samples[0].x.shape
    header = {
        "version": 1,
        "n": len(samples),
        "m": m,
        "d": d,
        "labels": [s.label for s in samples],
        "graphs": [s.graph.value for s in samples],
        "funcs": [s.func.value for s in samples],
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        for s in samples:
            fh.write(s.x.astype("<f4").tobytes())
            fh.write(s.y.astype("<f4").tobytes())


def load_dataset(path) -> list[Sample]:
    import json

    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a dataset container")
        (hlen,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        n, m, d = header["n"], header["m"], header["d"]
        payload = np.frombuffer(fh.read(n * 2 * m * d * 4), dtype="<f4").astype(np.float64)
    payload = payload.reshape(n, 2, m, d)
    out = []
    for i in range(n):
        out.append(
            Sample(
                x=payload[i, 0],
                y=payload[i, 1],
                label=int(header["labels"][i]),
                graph=GraphKind(header["graphs"][i]),
                func=FunctionClass(header["funcs"][i]),
            )
        )
    return out
