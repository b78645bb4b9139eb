"""Hamiltonian families: three-band Bloch model, rotating frames, perturbations."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .braid_algebra import GENERATORS, expm_antisym
from .errors import ConfigError, GapClosed, VerificationFailed

GAP_TOL = 1e-8


@dataclass(frozen=True)
class ThreeBandParams:
    """Onsite energies, cosine modulations and sine/cosine hoppings."""

    omega1: float = 0.0
    omega2: float = 0.0
    omega3: float = 0.0
    v1: float = 0.0
    v2: float = 0.0
    v3: float = 0.0
    w1: float = 0.0
    w2: float = 0.0
    u: float = 0.0

    def to_dict(self) -> dict:
        return {
            "model": "three_band",
            "omega": [self.omega1, self.omega2, self.omega3],
            "v": [self.v1, self.v2, self.v3],
            "w1": self.w1, "w2": self.w2, "u": self.u,
        }

    def reversed(self) -> "ThreeBandParams":
        """Parameters of H(-q): the sine hoppings change sign."""
        return replace(self, w1=-self.w1, u=-self.u)


def bloch_hamiltonian(p: ThreeBandParams, q) -> np.ndarray:
    """Bloch matrix at wavevector q; an array of q gives a (len(q), 3, 3) stack."""
    q = np.asarray(q, dtype=float)
    c, s = np.cos(q), np.sin(q)
    h = np.zeros(q.shape + (3, 3))
    h[..., 0, 0] = p.omega3 + 2 * p.v3 * c
    h[..., 1, 1] = p.omega2 + 2 * p.v2 * c
    h[..., 2, 2] = p.omega1 + 2 * p.v1 * c
    h01 = 2 * p.w1 * s + 2 * p.w2 * c
    h12 = 2 * p.u * s
    h[..., 0, 1] = h[..., 1, 0] = h01
    h[..., 1, 2] = h[..., 2, 1] = h12
    return h


def mirror_check(p: ThreeBandParams, grid_size: int = 64) -> np.ndarray | None:
    """Diagonal R with R H(q) R^-1 = H(-q), or None when no mirror applies."""
    if grid_size < 8:
        raise ValueError("grid_size must be at least 8")
    if p.w1 != 0 and p.w2 == 0:
        R = np.diag([1.0, -1.0, 1.0])
    elif p.w1 == 0 and p.w2 != 0:
        R = np.diag([1.0, 1.0, -1.0])
    else:
        return None
    q = np.linspace(-np.pi, np.pi, grid_size)
    lhs = R @ bloch_hamiltonian(p, q) @ R
    rhs = bloch_hamiltonian(p, -q)
    if np.max(np.abs(lhs - rhs)) > 1e-10:
        raise VerificationFailed("mirror operator fails the numerical check")
    return R


@dataclass(frozen=True)
class HamiltonianPath:
    """Real symmetric matrix family H(t) on [t0, t1].

    `band_order` names the basis in which holonomies are reported:
    "descending" puts the highest band first, "ascending" the lowest.
    """

    n: int
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    t0: float
    t1: float
    band_order: str = "ascending"
    label: str = ""

    def __call__(self, t: float) -> np.ndarray:
        return self.evaluate(np.array([t]))[0]

    def evaluate(self, ts) -> np.ndarray:
        """Stack of H(t) for an array of t."""
        return np.asarray(self.evaluator(np.asarray(ts, dtype=float)), dtype=float)

    @property
    def closed(self) -> bool:
        h = self.evaluate(np.array([self.t0, self.t1]))
        return bool(np.max(np.abs(h[0] - h[1])) < 1e-10)


def bloch_path(p: ThreeBandParams, label: str = "") -> HamiltonianPath:
    """The Bloch model over q in [-pi, pi], reported highest band first."""
    return HamiltonianPath(
        3, lambda q: bloch_hamiltonian(p, q), -np.pi, np.pi, "descending", label
    )


def sample_path(matrices: Sequence[np.ndarray], band_order: str = "descending",
                label: str = "") -> HamiltonianPath:
    """Piecewise-constant path through given samples, indexed by t = 0..K-1."""
    stack = np.asarray(matrices, dtype=float)

    def ev(ts):
        idx = np.clip(np.rint(ts).astype(int), 0, len(stack) - 1)
        return stack[idx]

    return HamiltonianPath(stack.shape[1], ev, 0.0, float(len(stack) - 1), band_order, label)


def resolve_generator(g) -> np.ndarray:
    if isinstance(g, str):
        if g not in GENERATORS:
            raise ConfigError(f"unknown generator {g!r}")
        return GENERATORS[g]
    return np.asarray(g, dtype=float)


@dataclass(frozen=True)
class FrameSpec:
    """H(t) = R(t) E R(t)^T with R built from rotation segments.

    Each segment is (generator, angle_start, angle_end); within a
    segment R(t) = R_done exp((t - angle_start) G).
    """

    n: int
    energies: tuple[float, ...]
    segments: tuple[tuple, ...] = ()

    def __post_init__(self):
        e = np.asarray(self.energies, float)
        if len(e) != self.n:
            raise ValueError("need one energy per band")
        if np.any(np.diff(e) <= 0):
            raise ValueError("energies must be strictly increasing")
        for g, a, b in self.segments:
            G = resolve_generator(g)
            if G.shape != (self.n, self.n) or np.max(np.abs(G + G.T)) > 1e-12:
                raise ValueError("segment generators must be antisymmetric n x n")
        for (_, _, b), (_, a, _) in zip(self.segments, self.segments[1:]):
            if abs(a - b) > 1e-12:
                raise ValueError("segments must be contiguous")


def frame_rotation(spec: FrameSpec, t: float) -> np.ndarray:
    """R(t): completed segments times the active partial exponential."""
    R = np.eye(spec.n)
    for g, a, b in spec.segments:
        G = resolve_generator(g)
        if t <= b or (g, a, b) == spec.segments[-1]:
            return R @ expm_antisym((min(t, b) - a) * G)
        R = R @ expm_antisym((b - a) * G)
    return R


def frame_path(spec: FrameSpec, label: str = "") -> HamiltonianPath:
    """Isospectral path R(t) E R(t)^T, reported in the E order."""
    E = np.diag(spec.energies)
    if not spec.segments:
        return HamiltonianPath(spec.n, lambda ts: np.broadcast_to(E, (len(ts),) + E.shape).copy(),
                               0.0, 1.0, "ascending", label)
    t0, t1 = spec.segments[0][1], spec.segments[-1][2]

    def ev(ts):
        out = np.empty((len(ts), spec.n, spec.n))
        for k, t in enumerate(ts):
            R = frame_rotation(spec, t)
            out[k] = R @ E @ R.T
        return out

    return HamiltonianPath(spec.n, ev, t0, t1, "ascending", label)


def sample_points(path: HamiltonianPath, n_samples: int) -> np.ndarray:
    return np.linspace(path.t0, path.t1, n_samples)


def gap_check(path: HamiltonianPath, n_samples: int = 4096) -> tuple[float, ...]:
    """Minimum adjacent-eigenvalue gaps over a uniform sample, lowest pair first."""
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    ev = np.linalg.eigvalsh(path.evaluate(sample_points(path, n_samples)))
    gaps = np.min(np.diff(ev, axis=1), axis=0)
    if np.min(gaps) < GAP_TOL:
        raise GapClosed(f"gap closes: minimum gaps {np.round(gaps, 12).tolist()}")
    return tuple(float(g) for g in gaps)


def perturbation_matrix(n: int, V: float, seed: int) -> np.ndarray:
    M = np.random.default_rng(seed).uniform(-V, V, size=(n, n))
    return (M + M.T) / 2.0


def perturb(path: HamiltonianPath, V: float, seed: int) -> HamiltonianPath:
    """Add a constant real symmetric disorder matrix with entries in [-V, V]."""
    if V < 0:
        raise ValueError("V must be non-negative")
    if V == 0:
        return path
    dH = perturbation_matrix(path.n, V, seed)
    base = path.evaluator
    return replace(path, evaluator=lambda ts: base(ts) + dH, label=f"{path.label}+dH(V={V},seed={seed})")


# Rows in column order omega1, omega2, omega3, v1, v2, v3, w1, w2, u.
_TABLE_ROWS = {
    "i": (0, 0, 4, -1, 1, 0, 1, 0, -1),
    "-i": (0, 0, 4, -1, 1, 0, -1, 0, 1),
    "k": (-4, 0, 0, 0, -1, 1, -1, 0, 1),
    "-k": (-4, 0, 0, 0, -1, 1, -1, 0, 1),
    "j": (0, 0, 0, -1, 0, 1, 0, 1, 1),
    "-j": (0, 0, 0, -1, 0, 1, 0, 1, -1),
    "-1(g)": (0, 0, 0, -1, 0, 1, 1, 0, -1),
    "-1(h)": (0, 0, 4, -1, 1, 0, 1, 0, -1),
    "-1(i)": (0, 0, 0, -1, 0, 1, 1, 0, 1),
}
TABLE_LABELS = tuple(_TABLE_ROWS)

# Alternative k-phase parameter set; it is gapless at q = pi.
MAIN_TEXT_K = ThreeBandParams(omega1=0, omega2=0, omega3=-4, v1=1, v2=0, v3=-1, w1=-1, w2=0, u=1)


def table_s3_params(label: str) -> ThreeBandParams:
    """Tight-binding parameter row by charge label."""
    key = label.replace("−", "-").replace(" ", "")
    if key not in _TABLE_ROWS:
        raise KeyError(f"unknown parameter row {label!r}; choose from {TABLE_LABELS}")
    vals = [float(x) for x in _TABLE_ROWS[key]]
    return ThreeBandParams(*vals)


def params_from_dict(d: dict) -> ThreeBandParams:
    try:
        om, v = d["omega"], d["v"]
        return ThreeBandParams(float(om[0]), float(om[1]), float(om[2]),
                               float(v[0]), float(v[1]), float(v[2]),
                               float(d["w1"]), float(d["w2"]), float(d["u"]))
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise ConfigError(f"bad three_band config: {e}") from e


def frame_spec_from_dict(d: dict) -> FrameSpec:
    try:
        energies = tuple(float(x) for x in d["energies"])
        segs = tuple((s["generator"], float(s["from"]), float(s["to"])) for s in d["segments"])
        return FrameSpec(len(energies), energies, segs)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad frame config: {e}") from e


def path_from_config(cfg: dict | str) -> HamiltonianPath:
    """Build a path from a JSON config object or string."""
    if isinstance(cfg, str):
        try:
            cfg = json.loads(cfg)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    model = cfg.get("model")
    if model == "three_band":
        return bloch_path(params_from_dict(cfg))
    if model == "frame":
        return frame_path(frame_spec_from_dict(cfg))
    raise ConfigError(f"unknown model {model!r}")
