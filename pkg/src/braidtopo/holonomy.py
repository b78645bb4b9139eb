"""Eigenframes, Wilson loops, SU(2)/SU(3) lifts and charge classification."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm, logm

from .braid_algebra import (
    GENERATORS,
    BraidWord,
    catalog,
    enumerate_group_G,
    expm_antisym,
    format_word,
    half_word_candidates,
    mirror_subset_Gm,
    to_matrix,
    to_su2,
)
from .errors import BraidTopoError, GapClosed, GaugeAmbiguous, NotInCatalog, NotQuantized
from .models import GAP_TOL, HamiltonianPath, ThreeBandParams, bloch_path, perturb
from .quaternion_charge import (
    GELL_MANN,
    J_TO_GELL_MANN,
    UnitQuaternion,
    q8_residual,
    quaternion_product,
    quaternion_to_rotation,
    rotation_increments_to_quaternions,
    su2_to_q8,
    su3_to_q16,
)

CONVENTIONS = (
    "bands labelled 1..n by ascending energy; matrices in the path's band_order basis; "
    "loop traversed from the first grid point; gauge: largest component positive at the "
    "first point, then sign continuity; lifts multiply left to right"
)


@dataclass(frozen=True)
class PathGrid:
    """Strictly increasing parameter samples, with optional mirror indices."""

    t_values: np.ndarray
    mirror_indices: tuple[int, int, int] | None = None

    def __post_init__(self):
        t = np.asarray(self.t_values, float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("t_values must be strictly increasing")
        if self.mirror_indices is not None:
            a, m, b = self.mirror_indices
            if not (a == 0 and b == len(t) - 1 and 0 < m < b):
                raise ValueError("mirror indices must be (0, middle, last)")

    @property
    def N(self) -> int:
        return len(self.t_values) - 1

    @classmethod
    def uniform(cls, t0: float, t1: float, N: int, mirror: bool = False) -> "PathGrid":
        t = np.linspace(t0, t1, N + 1)
        return cls(t, (0, N // 2, N) if mirror else None)

    @classmethod
    def bz(cls, N: int = 1024) -> "PathGrid":
        """Closed Brillouin-zone grid q = -pi .. pi with mirror points -pi, 0, pi."""
        if N % 2:
            raise ValueError("N must be even to place q = 0 on the grid")
        return cls.uniform(-np.pi, np.pi, N, mirror=True)

    @classmethod
    def for_path(cls, path: HamiltonianPath, N: int, mirror: bool = True) -> "PathGrid":
        return cls.uniform(path.t0, path.t1, N, mirror=mirror and N % 2 == 0)


@dataclass(frozen=True)
class EigenFrame:
    """Gauge-fixed eigenvectors on a grid; columns ordered by ascending energy."""

    t: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    band_order: str = "ascending"
    mirror_indices: tuple[int, int, int] | None = None
    min_overlap: float = 1.0
    hamiltonians: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    @property
    def N(self) -> int:
        return len(self.t) - 1

    def basis_vectors(self) -> np.ndarray:
        """Eigenvector columns in the reporting basis order."""
        return self.vectors[:, :, ::-1] if self.band_order == "descending" else self.vectors

    def band_label(self, basis_index: int) -> int:
        """Ascending band label (0-based) of a basis column."""
        return self.n - 1 - basis_index if self.band_order == "descending" else basis_index


def _base_gauge(V: np.ndarray) -> np.ndarray:
    """Signs making each column's largest-magnitude entry positive (ties: lowest index)."""
    mags = np.abs(V)
    signs = np.ones(V.shape[1])
    for c in range(V.shape[1]):
        idx = int(np.nonzero(mags[:, c] >= mags[:, c].max() - 1e-12)[0][0])
        signs[c] = 1.0 if V[idx, c] >= 0 else -1.0
    return signs


def eigenframe_from_matrices(
    H: np.ndarray,
    t: np.ndarray,
    band_order: str = "ascending",
    mirror_indices=None,
    gauge_threshold: float = 0.5,
    sign_seed: int | None = None,
) -> EigenFrame:
    """Eigen-decompose a stack of real symmetric matrices and fix the gauge.

    `sign_seed` scrambles the raw eigenvector signs before gauge fixing;
    the fixed frame must not depend on it.
    """
    H = np.asarray(H, float)
    if np.max(np.abs(H - np.swapaxes(H, 1, 2))) > 1e-12 * max(1.0, np.max(np.abs(H))):
        raise ValueError("matrices must be symmetric")
    E, V = np.linalg.eigh(H)
    gaps = np.diff(E, axis=1)
    if np.min(gaps) < GAP_TOL:
        k, b = np.unravel_index(int(np.argmin(gaps)), gaps.shape)
        raise GapClosed(f"gap between bands {b + 1},{b + 2} closes at t={t[k]:.6g}")
    if sign_seed is not None:
        flips = np.random.default_rng(sign_seed).choice([-1.0, 1.0], size=(len(t), 1, V.shape[2]))
        V = V * flips
    ov = np.einsum("kij,kij->kj", V[:-1], V[1:])
    mag = np.abs(ov)
    min_ov = float(mag.min()) if mag.size else 1.0
    if min_ov < gauge_threshold:
        k = int(np.argmin(mag.min(axis=1)))
        C = np.abs(V[k].T @ V[k + 1])
        j = int(np.argmin(np.diag(C)))
        i = int(np.argmax(C[:, j]))
        # A crossing between samples leaves a near-exchange of two columns.
        if i != j and C[i, j] > 0.9:
            a, b = sorted((i, j))
            raise GapClosed(f"bands {a + 1},{b + 1} cross between t={t[k]:.6g} and t={t[k + 1]:.6g}")
        raise GaugeAmbiguous(
            f"overlap {min_ov:.3f} between points {k} and {k + 1} is below {gauge_threshold}"
        )
    if min_ov < 0.5:
        warnings.warn(f"weak gauge overlap {min_ov:.3f}; the grid is coarse", stacklevel=2)
    step = np.sign(ov)
    signs = np.vstack([_base_gauge(V[0])[None, :], step])
    signs = np.cumprod(signs, axis=0)
    V = V * signs[:, None, :]
    return EigenFrame(np.asarray(t, float), E, V, band_order, mirror_indices, min_ov, H)


def eigenframe(path: HamiltonianPath, grid: PathGrid, gauge_threshold: float = 0.5,
               sign_seed: int | None = None) -> EigenFrame:
    """Gauge-fixed eigenframe of a path sampled on a grid."""
    H = path.evaluate(grid.t_values)
    return eigenframe_from_matrices(H, grid.t_values, path.band_order, grid.mirror_indices,
                                    gauge_threshold, sign_seed)


def _polar(M: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def step_overlaps(frame: EigenFrame, from_idx: int = 0, to_idx: int | None = None) -> np.ndarray:
    """Polar-projected overlaps O_k = B_k^T B_{k+1} in the reporting basis."""
    to_idx = frame.N if to_idx is None else to_idx
    B = frame.basis_vectors()[from_idx:to_idx + 1]
    return _polar(np.einsum("kji,kjl->kil", B[:-1], B[1:]))


def wilson_loop(frame: EigenFrame, from_idx: int = 0, to_idx: int | None = None,
                method: str = "overlap") -> np.ndarray:
    """Ordered product of step holonomies between two grid indices.

    "overlap" multiplies the projected overlaps; "connection" exponentiates
    the antisymmetric part of each overlap, a first-order connection rule.
    """
    to_idx = frame.N if to_idx is None else to_idx
    if not 0 <= from_idx < to_idx <= frame.N:
        raise ValueError("need 0 <= from_idx < to_idx <= N")
    O = step_overlaps(frame, from_idx, to_idx)
    if method == "connection":
        A = (O - np.swapaxes(O, 1, 2)) / 2.0
        O = np.array([expm_antisym(a) for a in A])
    elif method != "overlap":
        raise ValueError(f"unknown method {method!r}")
    W = np.eye(frame.n)
    for o in O:
        W = W @ o
    return W


def su2_holonomy(frame: EigenFrame, from_idx: int = 0, to_idx: int | None = None) -> UnitQuaternion:
    """Continuous SU(2) lift accumulated along the three-band frame."""
    if frame.n != 3:
        raise ValueError("SU(2) lift needs a three-band frame")
    q = rotation_increments_to_quaternions(step_overlaps(frame, from_idx, to_idx))
    return quaternion_product(q)


_J_NAMES = ("J12", "J23", "J34", "J13", "J24", "J14")


def _j_coefficients(A: np.ndarray) -> np.ndarray:
    """Coefficients of an antisymmetric 4x4 matrix on the J basis."""
    out = []
    for name in _J_NAMES:
        G = GENERATORS[name]
        out.append(np.sum(A * G) / np.sum(G * G))
    return np.array(out)


def su3_holonomy(frame: EigenFrame, from_idx: int = 0, to_idx: int | None = None
                 ) -> tuple[np.ndarray, np.ndarray]:
    """SU(3) lift of a four-band frame and the integrated J coefficients."""
    if frame.n != 4:
        raise ValueError("SU(3) lift needs a four-band frame")
    U = np.eye(3, dtype=complex)
    total = np.zeros(len(_J_NAMES))
    for o in step_overlaps(frame, from_idx, to_idx):
        A = np.real(logm(o))
        A = (A - A.T) / 2.0
        c = _j_coefficients(A)
        total += c
        X = sum(ci * 0.5j * GELL_MANN[J_TO_GELL_MANN[n]] for ci, n in zip(c, _J_NAMES))
        U = U @ expm(X)
    return U, total


def quantize_signed_perm(M: np.ndarray, tol: float = 1e-2) -> np.ndarray:
    """Round to a signed permutation matrix, or raise NotQuantized."""
    M = np.asarray(M, float)
    R = np.rint(np.clip(M, -1, 1)).astype(int)
    res = float(np.max(np.abs(M - R)))
    nz = R != 0
    ok = np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1)
    if res >= tol or not ok:
        raise NotQuantized(f"holonomy is {res:.3g} from a signed permutation", res)
    return R


@lru_cache(maxsize=None)
def _listed_half_words(strands: int) -> tuple[BraidWord, ...]:
    words: dict[tuple, BraidWord] = {}
    src = mirror_subset_Gm() if strands == 3 else []
    src += [c.half_word for c in catalog() if c.strands == strands and c.half_word is not None]
    for w in src:
        words.setdefault(w.letters, w)
    return tuple(sorted(words.values(), key=BraidWord.sort_key))


@lru_cache(maxsize=None)
def _all_short_words(strands: int) -> tuple[BraidWord, ...]:
    return tuple(half_word_candidates(strands, max_len=5 if strands == 3 else 4))


def braid_word_lookup(half_perm: np.ndarray, su2_sign_info: UnitQuaternion | None = None
                      ) -> list[BraidWord]:
    """Catalogued half-words with this matrix whose square carries the lifted charge.

    The canonical (shortest, then lexicographic) word comes first; the rest
    of the list is its equivalence class among catalogued words.
    """
    half_perm = np.asarray(half_perm, int)
    n = half_perm.shape[0]
    charge = None if su2_sign_info is None or n != 3 else su2_to_q8(su2_sign_info)

    def matches(w: BraidWord) -> bool:
        if not np.array_equal(to_matrix(w), half_perm):
            return False
        return charge is None or su2_to_q8(to_su2(w.power(2)), tol=1e-6) == charge

    found = [w for w in _listed_half_words(n) if matches(w)]
    if not found:
        found = [w for w in _all_short_words(n) if matches(w)][:1]
    if not found:
        raise NotInCatalog(f"no catalogued half-word for {half_perm.tolist()} with charge {charge}")
    return sorted(found, key=BraidWord.sort_key)


def word_for_matrix(M: np.ndarray) -> BraidWord:
    """Shortest word (lexicographic tie-break) with the given band-space matrix."""
    M = np.asarray(M, int)
    n = M.shape[0]
    if np.array_equal(M, np.eye(n, dtype=int)):
        return BraidWord(n)
    for w in _all_short_words(n):
        if np.array_equal(to_matrix(w), M):
            return w
    raise NotInCatalog(f"no word up to the search length gives {M.tolist()}")


@lru_cache(maxsize=None)
def _group_words() -> tuple[tuple[np.ndarray, BraidWord], ...]:
    return tuple((q.as_array(), w) for q, w in enumerate_group_G())


def full_word_from_lift(q: UnitQuaternion, tol: float = 0.1) -> BraidWord:
    """Canonical group word whose lift is nearest to q."""
    a = q.as_array()
    d, w = min(((float(np.linalg.norm(a - qa)), w) for qa, w in _group_words()),
               key=lambda x: (x[0], x[1].sort_key()))
    if d >= tol:
        raise NotQuantized(f"lift is {d:.3g} from every group element", d)
    return w


@dataclass
class HalfPhases:
    theta_minus: list[float]
    theta_plus: list[float]
    sums: list[float]
    zak: list[float]
    residual: float


def half_bz_phases(frame: EigenFrame, half_perm: np.ndarray,
                   half_perm_plus: np.ndarray | None = None) -> HalfPhases:
    """Quantized half-loop phases, listed by ascending label of the band at the midpoint.

    The partner of basis band m at the first point is the row holding the
    nonzero of column m of the first-half matrix; at the last point it is
    the column holding the nonzero of row m of the second-half matrix.
    `zak` lists the full-loop phases from the diagonal of the full holonomy
    in the reporting basis.
    """
    if frame.mirror_indices is None:
        raise ValueError("frame has no mirror indices")
    a, m, b = frame.mirror_indices
    P1 = np.asarray(half_perm, int)
    P2 = P1 if half_perm_plus is None else np.asarray(half_perm_plus, int)
    B = frame.basis_vectors()
    W1 = B[a].T @ B[m]
    W2 = B[m].T @ B[b]
    n = frame.n
    tm, tp = [0.0] * n, [0.0] * n
    res = 0.0
    for col in range(n):
        r1 = int(np.nonzero(P1[:, col])[0][0])
        c2 = int(np.nonzero(P2[col, :])[0][0])
        o1, o2 = W1[r1, col], W2[col, c2]
        res = max(res, abs(abs(o1) - 1), abs(abs(o2) - 1))
        lab = frame.band_label(col)
        tm[lab] = 0.0 if o1 > 0 else np.pi
        tp[lab] = 0.0 if o2 > 0 else np.pi
    if res >= 1e-2:
        raise NotQuantized(f"half-loop overlaps deviate from unit magnitude by {res:.3g}", res)
    sums = [float(np.mod(x + y, 2 * np.pi)) for x, y in zip(tm, tp)]
    Wf = B[a].T @ B[b]
    zak = [0.0 if d > 0 else float(np.pi) for d in np.diag(Wf)]
    return HalfPhases(tm, tp, sums, zak, float(res))


@dataclass
class ClassificationReport:
    """Everything derived from one closed path."""

    W_full: np.ndarray
    W_half_minus: np.ndarray | None
    W_half_plus: np.ndarray | None
    su2_lift: UnitQuaternion | None
    charge: str
    half_words: tuple[list[BraidWord], list[BraidWord]] | None
    full_word: BraidWord | None
    theta_minus: list[float] | None
    theta_plus: list[float] | None
    zak: list[float] | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def half_word(self) -> BraidWord | None:
        return None if self.half_words is None else self.half_words[0][0]

    def to_dict(self) -> dict:
        def mat(M):
            return None if M is None else np.round(np.asarray(M, float), 6).tolist()

        def ang(xs):
            return None if xs is None else [float(f"{x:.6g}") for x in xs]

        return {
            "charge": self.charge,
            "W_full": mat(self.W_full),
            "W_half_minus": mat(self.W_half_minus),
            "W_half_plus": mat(self.W_half_plus),
            "su2_lift": None if self.su2_lift is None else np.round(self.su2_lift.as_array(), 6).tolist(),
            "half_word": None if self.half_word is None else format_word(self.half_word),
            "half_word_class": None if self.half_words is None
            else [format_word(w) for w in self.half_words[0]],
            "full_word": None if self.full_word is None else format_word(self.full_word),
            "theta_minus": ang(self.theta_minus),
            "theta_plus": ang(self.theta_plus),
            "zak": ang(self.zak),
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _staged(stage: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except BraidTopoError as e:
        if isinstance(e, NotQuantized):
            raise NotQuantized(f"[{stage}] {e}", e.residual) from e
        raise type(e)(f"[{stage}] {e}") from e


def classify_frame(frame: EigenFrame, tol: float = 1e-2, require_mirror: bool = True
                   ) -> ClassificationReport:
    """Classify a closed three-band eigenframe."""
    W = wilson_loop(frame)
    Wq = _staged("quantize", quantize_signed_perm, W, tol)
    lift = _staged("lift", su2_holonomy, frame)
    charge = _staged("charge", su2_to_q8, lift)
    diag = {
        "grid_size": frame.N,
        "band_order": frame.band_order,
        "min_gaps": [float(g) for g in np.min(np.diff(frame.energies, axis=1), axis=0)],
        "min_gauge_overlap": frame.min_overlap,
        "residual_W_full": float(np.max(np.abs(W - Wq))),
        "residual_lift": q8_residual(lift),
        "conventions": CONVENTIONS,
    }
    Wm = Wp = None
    half_words = None
    full_word = None
    tm = tp = zak = None
    mirror_ok = False
    if frame.mirror_indices is not None:
        a, m, b = frame.mirror_indices
        Wm = wilson_loop(frame, a, m)
        Wp = wilson_loop(frame, m, b)
        try:
            Pm = quantize_signed_perm(Wm, tol)
            Pp = quantize_signed_perm(Wp, tol)
            mirror_ok = bool(np.array_equal(Pm, Pp))
        except NotQuantized:
            mirror_ok = False
        diag["mirror_split"] = mirror_ok
        if mirror_ok:
            diag["residual_W_half"] = float(max(np.max(np.abs(Wm - Pm)), np.max(np.abs(Wp - Pp))))
            cls_m = _staged("braid_word", braid_word_lookup, Pm, lift)
            half_words = (cls_m, cls_m)
            full_word = cls_m[0].power(2)
            ph = _staged("half_phases", half_bz_phases, frame, Pm, Pp)
            tm, tp, zak = ph.theta_minus, ph.theta_plus, ph.zak
            diag["residual_theta"] = ph.residual
            diag["theta_sums"] = [float(f"{x:.6g}") for x in ph.sums]
    if require_mirror and not mirror_ok:
        raise NotQuantized("[mirror] half-loop holonomies are not equal signed permutations")
    if full_word is None:
        full_word = _staged("braid_word", full_word_from_lift, lift)
    return ClassificationReport(W, Wm, Wp, lift, charge, half_words, full_word, tm, tp, zak, diag)


def classify(path: HamiltonianPath, grid: PathGrid | None = None, tol: float = 1e-2,
             gauge_threshold: float = 0.5, sign_seed: int | None = None,
             require_mirror: bool = True) -> ClassificationReport:
    """Full three-band pipeline: frame, loops, lift, charge, words, phases."""
    if path.n == 4:
        return classify_q16(path, grid, tol)
    grid = grid or PathGrid.for_path(path, 1024)
    if not path.closed:
        raise ValueError("classify needs a closed path")
    frame = _staged("eigenframe", eigenframe, path, grid, gauge_threshold, sign_seed)
    return classify_frame(frame, tol, require_mirror)


def _pick_q16_entry(Wq: np.ndarray, labels: tuple[str, ...], coeffs: np.ndarray):
    best, score = None, -np.inf
    for c in catalog():
        if c.strands != 4 or c.charge not in labels or not c.word_matches_holonomy():
            continue
        if not np.array_equal(c.holonomy, Wq):
            continue
        v = _j_coefficients(c.angle * c.axis_generator)
        s = float(v @ coeffs / (np.linalg.norm(v) * np.linalg.norm(coeffs) + 1e-300))
        if s > score:
            best, score = c, s
    return best


def classify_q16(path: HamiltonianPath, grid: PathGrid | None = None, tol: float = 1e-2
                 ) -> ClassificationReport:
    """Four-band pipeline with the SU(3) lift and Q16 labels."""
    grid = grid or PathGrid.for_path(path, 1024, mirror=False)
    if not path.closed:
        raise ValueError("classify_q16 needs a closed path")
    frame = _staged("eigenframe", eigenframe, path, grid)
    W = wilson_loop(frame)
    Wq = _staged("quantize", quantize_signed_perm, W, tol)
    U, coeffs = su3_holonomy(frame)
    labels, dist = _staged("charge", su3_to_q16, U, 0.1)
    entry = _pick_q16_entry(Wq, labels, coeffs)
    charge = entry.charge if entry is not None else "/".join(labels)
    diag = {
        "grid_size": frame.N,
        "band_order": frame.band_order,
        "min_gaps": [float(g) for g in np.min(np.diff(frame.energies, axis=1), axis=0)],
        "residual_W_full": float(np.max(np.abs(W - Wq))),
        "residual_lift": dist,
        "charge_candidates": list(labels),
        "conventions": CONVENTIONS,
    }
    full_word = entry.braid_word if entry is not None else None
    half = ([entry.half_word], [entry.half_word]) if entry is not None and entry.half_word else None
    return ClassificationReport(W, None, None, None, charge, half, full_word, None, None, None, diag)


@dataclass
class StrandTable:
    header: list[str]
    rows: np.ndarray

    def to_csv(self) -> str:
        lines = [",".join(self.header)]
        for r in self.rows:
            vals = [f"{r[0]:.6g}", str(int(r[1]))] + [f"{x:.6g}" for x in r[2:]]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def strand_trajectories(frame: EigenFrame) -> StrandTable:
    """Per band and grid point: eigenvalue and gauge-fixed components."""
    n = frame.n
    header = ["t", "band", "eigenvalue"] + [f"c{i + 1}" for i in range(n)]
    rows = []
    for band in range(n):
        for k, t in enumerate(frame.t):
            rows.append([t, band + 1, frame.energies[k, band], *frame.vectors[k, :, band]])
    return StrandTable(header, np.array(rows))


@dataclass
class RobustnessRow:
    V: float
    runs: int
    gap_closed: int
    invariant: int
    failures: int
    fraction: float
    min_gap_mean: float
    min_gap_min: float


def _robust_key(frame: EigenFrame, tol: float) -> tuple[str, str]:
    W = wilson_loop(frame)
    quantize_signed_perm(W, tol)
    lift = su2_holonomy(frame)
    return su2_to_q8(lift), format_word(full_word_from_lift(lift))


def _robust_one(args):
    params, V, seed, N, tol = args
    path = perturb(bloch_path(params), V, seed)
    grid = PathGrid.bz(N)
    try:
        frame = eigenframe(path, grid)
    except GapClosed:
        return ("gap", None, np.nan)
    except GaugeAmbiguous:
        return ("fail", None, np.nan)
    gap = float(np.min(np.diff(frame.energies, axis=1)))
    try:
        return ("ok", _robust_key(frame, tol), gap)
    except BraidTopoError:
        return ("fail", None, gap)


def robustness_study(params: ThreeBandParams, V_list, seeds: int = 100, N: int = 1024,
                     tol: float = 1e-2, workers: int = 1) -> list[RobustnessRow]:
    """Invariance of charge and full-word class under constant random disorder.

    Gap-closed runs are excluded from the denominator; every other run that
    fails to quantize counts as a change.
    """
    base = classify(bloch_path(params), PathGrid.bz(N), tol)
    ref = (base.charge, format_word(full_word_from_lift(base.su2_lift)))
    jobs = [(params, float(V), s, N, tol) for V in V_list for s in range(seeds)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_robust_one, jobs, chunksize=16))
    else:
        results = [_robust_one(j) for j in jobs]
    rows = []
    for i, V in enumerate(V_list):
        chunk = results[i * seeds:(i + 1) * seeds]
        gap_closed = sum(r[0] == "gap" for r in chunk)
        inv = sum(r[0] == "ok" and r[1] == ref for r in chunk)
        fail = seeds - gap_closed - inv
        gaps = np.array([r[2] for r in chunk if r[0] != "gap"], float)
        denom = seeds - gap_closed
        rows.append(RobustnessRow(
            float(V), seeds, gap_closed, inv, fail,
            inv / denom if denom else float("nan"),
            float(np.nanmean(gaps)) if gaps.size else float("nan"),
            float(np.nanmin(gaps)) if gaps.size else float("nan"),
        ))
    return rows


def breakdown_V(params: ThreeBandParams, V_list, seeds: int = 100, N: int = 1024,
                workers: int = 1) -> float | None:
    """Smallest V in the ladder whose invariance fraction drops below 1."""
    for row in robustness_study(params, V_list, seeds, N, workers=workers):
        if not row.fraction == 1.0:
            return row.V
    return None
