"""Green's-function response of three coupled resonators and its inversion."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import ConfigError, DegenerateSpectrum, NonConvergence
from .holonomy import (
    ClassificationReport,
    StrandTable,
    classify_frame,
    eigenframe_from_matrices,
    strand_trajectories,
)

DEFAULT_GAMMA = 15.0
SOURCE = 2


@dataclass(frozen=True)
class ResonatorParams:
    """Onsite frequencies (omega1, omega2, omega3), couplings, loss and source scale."""

    omega: tuple[float, float, float]
    t1: float = 0.0
    t2: float = 0.0
    gamma: float = DEFAULT_GAMMA
    G0: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def hamiltonian(self) -> np.ndarray:
        """Lossless part; rows are cavities 1..3 with omega3 on the first site."""
        w1, w2, w3 = self.omega
        return np.array([[w3, self.t1, 0.0], [self.t1, w2, self.t2], [0.0, self.t2, w1]])

    def as_vector(self) -> np.ndarray:
        return np.array([*self.omega, self.t1, self.t2, self.gamma, self.G0], float)

    @classmethod
    def from_vector(cls, x) -> "ResonatorParams":
        x = [float(v) for v in x]
        return cls((x[0], x[1], x[2]), x[3], x[4], abs(x[5]), x[6])

    def to_dict(self) -> dict:
        return {"omega": list(self.omega), "t1": self.t1, "t2": self.t2,
                "gamma": self.gamma, "G0": self.G0}


PARAM_NAMES = ("omega1", "omega2", "omega3", "t1", "t2", "gamma", "G0")


@dataclass
class ResponseSpectrum:
    theta_index: int
    omegas: np.ndarray
    response: np.ndarray  # (3, M) complex, probes 1..3

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, float)
        self.response = np.asarray(self.response, complex)
        if np.any(np.diff(self.omegas) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if self.response.shape != (3, len(self.omegas)):
            raise ValueError("response must have shape (3, len(omegas))")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta_index", "omega_rad_s", "probe", "re", "im"])
        for l in range(3):
            for om, p in zip(self.omegas, self.response[l]):
                w.writerow([self.theta_index, repr(float(om)), l + 1, repr(float(p.real)), repr(float(p.imag))])
        return buf.getvalue()


def spectra_from_csv(text: str) -> list[ResponseSpectrum]:
    """Parse spectrum CSV into one spectrum per theta index."""
    rows = list(csv.DictReader(io.StringIO(text)))
    need = {"theta_index", "omega_rad_s", "probe", "re", "im"}
    if not rows or not need <= set(rows[0]):
        raise ConfigError(f"spectrum CSV needs columns {sorted(need)}")
    by_theta: dict[int, dict[int, dict[float, complex]]] = {}
    for i, r in enumerate(rows, start=2):
        try:
            th, pr = int(r["theta_index"]), int(r["probe"])
            om, val = float(r["omega_rad_s"]), complex(float(r["re"]), float(r["im"]))
        except ValueError as e:
            raise ConfigError(f"spectrum CSV line {i}: {e}") from e
        by_theta.setdefault(th, {}).setdefault(pr, {})[om] = val
    out = []
    for th, probes in sorted(by_theta.items()):
        oms = sorted(probes.get(2, {}))
        resp = np.array([[probes.get(l, {}).get(o, 0.0) for o in oms] for l in (1, 2, 3)])
        out.append(ResponseSpectrum(th, np.array(oms), resp))
    return out


def _eig(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(H)


def response_matrix(p: ResonatorParams, omegas) -> np.ndarray:
    """P_l(omega) for all probes, shape (3, M)."""
    omegas = np.asarray(omegas, float)
    E, phi = _eig(p.hamiltonian())
    denom = omegas[None, :] - E[:, None] + 1j * p.gamma  # (n, M)
    weights = p.G0 * phi * phi[SOURCE - 1][None, :]  # (l, n)
    return weights @ (1.0 / denom)


def greens_response(p: ResonatorParams, omega, probe: int):
    """Steady-state response at `probe` for a source at cavity 2."""
    if probe not in (1, 2, 3):
        raise ValueError("probe must be 1, 2 or 3")
    out = response_matrix(p, np.atleast_1d(omega))[probe - 1]
    return out[0] if np.ndim(omega) == 0 else out


def default_grid(p: ResonatorParams, points: int = 200, margin: float = 5.0) -> np.ndarray:
    E = np.linalg.eigvalsh(p.hamiltonian())
    return np.linspace(E.min() - margin * p.gamma, E.max() + margin * p.gamma, points)


def synth_spectrum(p: ResonatorParams, omegas=None, noise_rel: float = 0.0, seed: int = 0,
                   theta_index: int = 0) -> ResponseSpectrum:
    """Model response plus complex Gaussian noise scaled by the peak magnitude."""
    if noise_rel < 0:
        raise ValueError("noise_rel must be non-negative")
    omegas = default_grid(p) if omegas is None else np.asarray(omegas, float)
    P = response_matrix(p, omegas)
    if noise_rel > 0:
        rng = np.random.default_rng(seed)
        scale = noise_rel * np.max(np.abs(P))
        P = P + scale * (rng.standard_normal(P.shape) + 1j * rng.standard_normal(P.shape)) / np.sqrt(2)
    return ResponseSpectrum(theta_index, omegas, P)


@dataclass
class FitResult:
    params: ResonatorParams
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float
    iterations: int
    cost_history: list[float] = field(default_factory=list, repr=False)
    unidentified: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "unidentified": list(self.unidentified),
        }


def _residual_vector(x: np.ndarray, s: ResponseSpectrum) -> np.ndarray:
    d = response_matrix(ResonatorParams.from_vector(x), s.omegas) - s.response
    return np.concatenate([d.real.ravel(), d.imag.ravel()])


def _jacobian(x: np.ndarray, s: ResponseSpectrum) -> np.ndarray:
    h = 1e-7 * np.maximum(np.abs(x), 1.0)
    cols = []
    for j in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[j] += h[j]
        xm[j] -= h[j]
        cols.append((_residual_vector(xp, s) - _residual_vector(xm, s)) / (2 * h[j]))
    return np.stack(cols, axis=1)


def unidentified_parameters(x: np.ndarray, s: ResponseSpectrum, rel: float = 1e-6) -> tuple[str, ...]:
    """Parameters the spectrum does not constrain (vanishing Jacobian columns)."""
    J = _jacobian(x, s) * np.maximum(np.abs(x), 1.0)[None, :]
    norms = np.linalg.norm(J, axis=0)
    return tuple(n for n, v in zip(PARAM_NAMES, norms) if v < rel * norms.max())


def _hwhm(omegas: np.ndarray, power: np.ndarray, idx: int) -> float:
    half = power[idx] / 2.0
    lo = idx
    while lo > 0 and power[lo] > half:
        lo -= 1
    hi = idx
    while hi < len(power) - 1 and power[hi] > half:
        hi += 1
    return max((omegas[hi] - omegas[lo]) / 2.0, omegas[1] - omegas[0])


def find_resonances(s: ResponseSpectrum, rel_prominence: float = 0.01) -> np.ndarray:
    """Peak frequencies found in any probe, merged when closer than ten samples."""
    cands = []
    for l in range(3):
        mag = np.abs(s.response[l])
        if mag.max() == 0:
            continue
        idx, props = find_peaks(mag, prominence=rel_prominence * mag.max())
        cands += [(s.omegas[i], pr / mag.max()) for i, pr in zip(idx, props["prominences"])]
    cands.sort()
    merge = 10 * float(np.median(np.diff(s.omegas)))
    clusters: list[list[tuple[float, float]]] = []
    for c in cands:
        if clusters and c[0] - clusters[-1][-1][0] < merge:
            clusters[-1].append(c)
        else:
            clusters.append([c])
    peaks = [(max(cl, key=lambda c: c[1])[0], sum(c[1] for c in cl)) for cl in clusters]
    return np.array([w for w, _ in peaks]), np.array([v for _, v in peaks])


def initial_guess(s: ResponseSpectrum) -> ResonatorParams:
    """Peak positions, a common width, and residues of a linear pole fit."""
    freqs, weight = find_resonances(s)
    if len(freqs) < 3:
        raise DegenerateSpectrum(f"found {len(freqs)} resolvable peaks; pass an initial guess")
    E = np.sort(freqs[np.argsort(weight)[-3:]])
    p2 = np.abs(s.response[SOURCE - 1]) ** 2
    tallest = int(np.argmax(p2))
    gamma = _hwhm(s.omegas, p2, tallest)
    basis = 1.0 / (s.omegas[:, None] - E[None, :] + 1j * gamma)  # (M, 3)
    A = np.vstack([basis.real, basis.imag])
    c = np.empty((3, 3))
    for l in range(3):
        b = np.concatenate([s.response[l].real, s.response[l].imag])
        c[l] = np.linalg.lstsq(A, b, rcond=None)[0]
    G0 = float(c[SOURCE - 1].sum())
    phi2 = np.sqrt(np.clip(c[SOURCE - 1] / G0, 1e-12, None))
    phi = c / (G0 * phi2[None, :])
    phi[SOURCE - 1] = phi2
    U, _, Vt = np.linalg.svd(phi)
    phi = U @ Vt
    H = phi @ np.diag(E) @ phi.T
    return ResonatorParams((H[2, 2], H[1, 1], H[0, 0]), H[0, 1], H[1, 2], gamma, G0)


def fit_spectrum(s: ResponseSpectrum, init: ResonatorParams | None = None,
                 max_iter: int = 500, lam0: float = 1e-3) -> FitResult:
    """Damped Gauss-Newton (Levenberg-Marquardt) fit of all probe spectra."""
    x = (init if init is not None else initial_guess(s)).as_vector()
    r = _residual_vector(x, s)
    cost = float(r @ r)
    data_norm = float(np.sum(np.abs(s.response) ** 2)) * 2
    history = [cost]
    lam = lam0
    it = 0
    for it in range(1, max_iter + 1):
        if cost <= 1e-28 * data_norm:
            break
        J = _jacobian(x, s)
        A = J.T @ J
        g = J.T @ r
        D = np.diag(np.maximum(np.diag(A), 1e-300))
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * D, -g)
            except np.linalg.LinAlgError:
                lam *= 3.0
                continue
            x_new = x + step
            r_new = _residual_vector(x_new, s)
            c_new = float(r_new @ r_new)
            if c_new < cost:
                accepted = True
                lam /= 3.0
                break
            lam *= 3.0
        if not accepted:
            break
        rel = (cost - c_new) / cost
        x, r, cost = x_new, r_new, c_new
        history.append(cost)
        if rel < 1e-15 and np.max(np.abs(step) / np.maximum(np.abs(x), 1.0)) < 1e-13:
            break
    else:
        raise NonConvergence(f"no convergence after {max_iter} iterations (cost {cost:.3g})")
    params = ResonatorParams.from_vector(x)
    E, phi = _eig(params.hamiltonian())
    return FitResult(params, E, phi, float(np.sqrt(cost / len(r))), it, history,
                     unidentified_parameters(x, s))


# Fitted sweeps over theta; blank coupling cells follow the stated constraint.
SWEEP_TABLES = {
    "s5": ("""point,omega1,omega2,omega3,t1,t2
1,8635.1,8701.9,8890.4,,0
2,8627.6,8715.1,8876.3,,32.7
3,8615.2,8729.1,8862.6,,49.4
4,8609.1,8761.4,8838.1,,72.6
5,8617.1,8839.6,8756.6,,79.6
6,8614.9,8860.2,8724.8,,71.0
7,8619.5,8881.4,8702.8,,34.6
8,8635.1,8890.4,8701.9,,0
9,8634.2,8901.2,8723.5,,-39.9
10,8605.2,8864.8,8741.9,,-63.7
11,8616.7,8839.9,8765.5,,-69.1
12,8610.5,8769.7,8829.5,,-75.4
13,8606.4,8741,8859.5,,-69.1
14,8617.4,8706.2,8880.3,,-39.9
15,8617.6,8684.3,8901.2,,-18.8
16,8635.1,8701.9,8890.4,,0
""", "t2=-t1", "k"),
    "s6": ("""point,omega1,omega2,omega3,t1,t2
1,8690.1,8792.5,8887.6,81.1,0
2,8716.1,8803.0,8884.6,76.0,26.2
3,8734.3,8806.8,8865.8,59.7,53.7
4,8759.8,8807.6,8774.1,27.5,75.5
5,8817.6,8804.2,8780.3,-13.9,79.1
6,8866.2,8804.9,8730.8,-59.7,53.8
7,8885.9,8805.2,8714.9,-76.0,26.2
8,8890.1,8797.4,8689.1,-80.5,0
9,8878.3,8810.1,8720.8,-69.6,-40.2
10,8837.4,8802.1,8763.7,-33.9,-72.8
11,8798.9,8804.7,8780.5,-1.4,-80.3
12,8771.7,8805.6,8825.4,26.1,-76.0
13,8756.0,8807.1,8847.3,40.2,-69.6
14,8722.6,8800.2,8880.1,70.9,-37.7
15,8690.1,8792.5,8887.6,81.1,0
""", None, "j"),
    "s7": ("""point,omega1,omega2,omega3,t1,t2
1,8706.5,8800.0,8894.8,0,
2,8714.3,8799.1,8884.4,34.2,
3,8743.3,8804.0,8857.9,63.3,
4,8769.4,8798.7,8829.8,76.1,
5,8829.2,8799.5,8769.4,77.4,
6,8857.4,8796.7,8743.9,64.9,
7,8880.9,8804.1,8718.3,38.6,
8,8894.0,8800.0,8705.5,0,
9,8880.4,8803.2,8717.9,-38.9,
10,8847.8,8801.4,8754.8,-69.5,
11,8803.9,8898.3,8800.1,-81.2,
12,8774.3,8797.9,8821.8,-77.7,
13,8736.9,8800.2,8861.3,-62.9,
14,8714.6,8799.6,8889.4,-28.5,
15,8706.5,8800.0,8894.8,0,
""", "t1=t2", "-1"),
}

FIT_COLUMNS = ("point", "omega1", "omega2", "omega3", "t1", "t2")


def _apply_constraint(t1, t2, constraint, where):
    if constraint is None:
        if t1 is None or t2 is None:
            raise ConfigError(f"{where}: blank coupling needs a constraint")
        return t1, t2
    if constraint == "t2=-t1":
        if t1 is None and t2 is None:
            raise ConfigError(f"{where}: both couplings blank")
        return (-t2, t2) if t1 is None else (t1, -t1)
    if constraint == "t1=t2":
        if t1 is None and t2 is None:
            raise ConfigError(f"{where}: both couplings blank")
        v = t1 if t1 is not None else t2
        return v, v
    raise ConfigError(f"unknown constraint {constraint!r}")


def ingest_fit_table(rows, constraint: str | None = None, gamma: float = DEFAULT_GAMMA,
                     G0: float = 1.0) -> list[ResonatorParams]:
    """Parse a fitted-parameter table (CSV text or list of dicts) into a sweep."""
    if isinstance(rows, str):
        text = rows.strip()
        if not text:
            return []
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or tuple(reader.fieldnames) != FIT_COLUMNS:
            raise ConfigError(f"header must be {','.join(FIT_COLUMNS)}, got {reader.fieldnames}")
        rows = list(reader)
    out = []
    for i, r in enumerate(rows, start=1):
        def num(col, blank_ok=False):
            v = r.get(col)
            if v is None or str(v).strip() == "":
                if blank_ok:
                    return None
                raise ConfigError(f"row {i}, column {col}: missing value")
            try:
                return float(v)
            except ValueError as e:
                raise ConfigError(f"row {i}, column {col}: {v!r} is not a number") from e

        t1, t2 = _apply_constraint(num("t1", True), num("t2", True), constraint, f"row {i}")
        out.append(ResonatorParams((num("omega1"), num("omega2"), num("omega3")), t1, t2, gamma, G0))
    return out


def sweep_table(name: str) -> tuple[list[ResonatorParams], str]:
    """Built-in sweep by name ('s5', 's6', 's7') and its labelled charge."""
    text, constraint, charge = SWEEP_TABLES[name.lower()]
    return ingest_fit_table(text, constraint), charge


@dataclass
class SweepBraid:
    report: ClassificationReport
    strands: StrandTable


def braid_from_sweep(sweep: Sequence, gauge_threshold: float = 0.3, tol: float = 0.1
                     ) -> SweepBraid:
    """Classify a closed theta sweep of fitted Hamiltonians.

    The loop is re-based at the middle sample (theta = pi) so that it runs
    over the same interval as the Bloch models, with theta = 0 as the
    midpoint. Fitted points are only approximately mirror symmetric, so
    the quantization tolerance is looser than for analytic paths.
    """
    params = [s.params if isinstance(s, FitResult) else s for s in sweep]
    H = np.array([p.hamiltonian() for p in params])
    if len(H) < 3:
        raise ValueError("sweep needs at least three points")
    if np.max(np.abs(H[0] - H[-1])) > 1e-6 * np.max(np.abs(H)):
        raise ValueError("sweep is not closed: first and last points differ")
    m = (len(H) - 1) // 2
    Hr = np.concatenate([H[m:], H[1:m + 1]])
    t = np.arange(len(Hr), dtype=float)
    frame = eigenframe_from_matrices(Hr, t, "descending", (0, len(Hr) - 1 - m, len(Hr) - 1),
                                     gauge_threshold)
    report = classify_frame(frame, tol)
    return SweepBraid(report, strand_trajectories(frame))


def fit_results_to_json(results: list[FitResult]) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2)


def params_with(p: ResonatorParams, **kw) -> ResonatorParams:
    return replace(p, **kw)
