"""Quaternion charges: Q8 and Q16 group algebra, SU(2) lifts, quantization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AngleTooLarge, NotQuantized

Q8_NAMES = ("1", "-1", "i", "-i", "j", "-j", "k", "-k")
Q16_NAMES = (
    "1", "-1", "q12", "-q12", "q23", "-q23", "q34", "-q34",
    "q13", "-q13", "q24", "-q24", "q14", "-q14", "q1234", "-q1234",
)


@dataclass(frozen=True)
class UnitQuaternion:
    """Hamilton quaternion w + xi + yj + zk of unit norm."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = self.w**2 + self.x**2 + self.y**2 + self.z**2
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm^2 {n} is not 1")

    @classmethod
    def from_array(cls, a) -> "UnitQuaternion":
        a = np.asarray(a, dtype=float)
        a = a / np.linalg.norm(a)
        return cls(*(float(v) for v in a))

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        return UnitQuaternion.from_array(qmul(self.as_array(), other.as_array()))

    def __neg__(self) -> "UnitQuaternion":
        return UnitQuaternion(-self.w, -self.x, -self.y, -self.z)

    def conj(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def close_to(self, other: "UnitQuaternion", tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.as_array() - other.as_array())) < tol)


def qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of two quaternion arrays (w, x, y, z)."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


_Q8_ARRAYS = {
    "1": (1, 0, 0, 0), "-1": (-1, 0, 0, 0),
    "i": (0, 1, 0, 0), "-i": (0, -1, 0, 0),
    "j": (0, 0, 1, 0), "-j": (0, 0, -1, 0),
    "k": (0, 0, 0, 1), "-k": (0, 0, 0, -1),
}


def q8_quaternion(name: str) -> UnitQuaternion:
    return UnitQuaternion(*(float(v) for v in _Q8_ARRAYS[name]))


def q8_multiply(a: str, b: str) -> str:
    """Product in Q8 using ij = k."""
    p = qmul(np.array(_Q8_ARRAYS[a], float), np.array(_Q8_ARRAYS[b], float))
    for name, arr in _Q8_ARRAYS.items():
        if np.array_equal(p, np.array(arr, float)):
            return name
    raise AssertionError("Q8 not closed")  # unreachable


def q8_inverse(a: str) -> str:
    return next(b for b in Q8_NAMES if q8_multiply(a, b) == "1")


# Rows and columns follow Q16_NAMES; entry [a][b] is a*b.
# Regenerated by q16_embedding() in the test suite.
Q16_TABLE = (
    ("1", "-1", "q12", "-q12", "q23", "-q23", "q34", "-q34", "q13", "-q13", "q24", "-q24", "q14", "-q14", "q1234", "-q1234"),
    ("-1", "1", "-q12", "q12", "-q23", "q23", "-q34", "q34", "-q13", "q13", "-q24", "q24", "-q14", "q14", "-q1234", "q1234"),
    ("q12", "-q12", "-1", "1", "q13", "-q13", "q14", "-q14", "-q23", "q23", "q1234", "-q1234", "-q34", "q34", "-q24", "q24"),
    ("-q12", "q12", "1", "-1", "-q13", "q13", "-q14", "q14", "q23", "-q23", "-q1234", "q1234", "q34", "-q34", "q24", "-q24"),
    ("q23", "-q23", "-q13", "q13", "-1", "1", "q24", "-q24", "q12", "-q12", "-q34", "q34", "-q1234", "q1234", "q14", "-q14"),
    ("-q23", "q23", "q13", "-q13", "1", "-1", "-q24", "q24", "-q12", "q12", "q34", "-q34", "q1234", "-q1234", "-q14", "q14"),
    ("q34", "-q34", "-q14", "q14", "-q24", "q24", "-1", "1", "q1234", "-q1234", "q23", "-q23", "q12", "-q12", "-q13", "q13"),
    ("-q34", "q34", "q14", "-q14", "q24", "-q24", "1", "-1", "-q1234", "q1234", "-q23", "q23", "-q12", "q12", "q13", "-q13"),
    ("q13", "-q13", "q23", "-q23", "-q12", "q12", "q1234", "-q1234", "-1", "1", "-q14", "q14", "q24", "-q24", "-q34", "q34"),
    ("-q13", "q13", "-q23", "q23", "q12", "-q12", "-q1234", "q1234", "1", "-1", "q14", "-q14", "-q24", "q24", "q34", "-q34"),
    ("q24", "-q24", "q1234", "-q1234", "q34", "-q34", "-q23", "q23", "q14", "-q14", "-1", "1", "-q13", "q13", "-q12", "q12"),
    ("-q24", "q24", "-q1234", "q1234", "-q34", "q34", "q23", "-q23", "-q14", "q14", "1", "-1", "q13", "-q13", "q12", "-q12"),
    ("q14", "-q14", "q34", "-q34", "-q1234", "q1234", "-q12", "q12", "-q24", "q24", "q13", "-q13", "-1", "1", "q23", "-q23"),
    ("-q14", "q14", "-q34", "q34", "q1234", "-q1234", "q12", "-q12", "q24", "-q24", "-q13", "q13", "1", "-1", "-q23", "q23"),
    ("q1234", "-q1234", "-q24", "q24", "q14", "-q14", "-q13", "q13", "-q34", "q34", "-q12", "q12", "q23", "-q23", "1", "-1"),
    ("-q1234", "q1234", "q24", "-q24", "-q14", "q14", "q13", "-q13", "q34", "-q34", "q12", "-q12", "-q23", "q23", "-1", "1"),
)

_Q16_INDEX = {n: i for i, n in enumerate(Q16_NAMES)}


def q16_multiply(a: str, b: str) -> str:
    """Product in the 16-element group of the four-band charges."""
    return Q16_TABLE[_Q16_INDEX[a]][_Q16_INDEX[b]]


def q16_inverse(a: str) -> str:
    return next(b for b in Q16_NAMES if q16_multiply(a, b) == "1")


def q16_embedding() -> dict[str, np.ndarray]:
    """Faithful 4x4 complex matrices for Q16.

    The three generators pairwise anticommute and square to -1;
    q14 is defined as q12 q34.
    """
    sx = np.array([[0, 1], [1, 0]], complex)
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.diag([1, -1]).astype(complex)
    eye2 = np.eye(2)
    q12 = np.kron(1j * sx, eye2)
    q23 = np.kron(1j * sy, eye2)
    q34 = np.kron(1j * sz, sz)
    base = {
        "1": np.eye(4, dtype=complex), "q12": q12, "q23": q23, "q34": q34,
        "q13": q12 @ q23, "q24": q23 @ q34, "q14": q12 @ q34,
        "q1234": q12 @ q23 @ q34,
    }
    out = {}
    for name, m in base.items():
        out[name] = m
        out["-1" if name == "1" else "-" + name] = -m
    return out


def build_q16_table() -> tuple[tuple[str, ...], ...]:
    """Multiplication table recomputed from q16_embedding."""
    emb = q16_embedding()

    def name_of(m):
        return next(n for n in Q16_NAMES if np.allclose(emb[n], m))

    return tuple(
        tuple(name_of(emb[a] @ emb[b]) for b in Q16_NAMES) for a in Q16_NAMES
    )


def su2_to_q8(q: UnitQuaternion, tol: float = 0.1) -> str:
    """Nearest Q8 element to q, or NotQuantized if none lies within tol."""
    a = q.as_array()
    best, dist = None, np.inf
    for name, arr in _Q8_ARRAYS.items():
        d = float(np.linalg.norm(a - np.array(arr, float)))
        if d < dist:
            best, dist = name, d
    if dist >= tol:
        raise NotQuantized(f"lift {a.round(4).tolist()} is {dist:.3g} from Q8", dist)
    return best


def q8_residual(q: UnitQuaternion) -> float:
    a = q.as_array()
    return min(float(np.linalg.norm(a - np.array(v, float))) for v in _Q8_ARRAYS.values())


def quaternion_to_rotation(q: UnitQuaternion) -> np.ndarray:
    """SO(3) image of a unit quaternion (standard double cover)."""
    w, x, y, z = q.as_array()
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_increment_to_quaternion(R: np.ndarray, margin: float = 1e-6) -> UnitQuaternion:
    """Lift of a rotation with angle below pi, choosing w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = float(np.trace(R))
    if tr <= -1.0 + margin:
        raise AngleTooLarge(f"rotation trace {tr:.6f} too close to -1; refine the grid")
    w = np.sqrt(1.0 + tr) / 2.0
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / (4.0 * w)
    return UnitQuaternion.from_array(np.concatenate([[w], v]))


def rotation_increments_to_quaternions(Rs: np.ndarray, margin: float = 1e-6) -> np.ndarray:
    """Vectorised rotation_increment_to_quaternion over a stack (K, 3, 3)."""
    Rs = np.asarray(Rs, dtype=float)
    tr = np.trace(Rs, axis1=1, axis2=2)
    bad = np.nonzero(tr <= -1.0 + margin)[0]
    if bad.size:
        raise AngleTooLarge(f"step {int(bad[0])}: rotation too close to pi; refine the grid")
    w = np.sqrt(1.0 + tr) / 2.0
    q = np.stack([
        w,
        (Rs[:, 2, 1] - Rs[:, 1, 2]) / (4 * w),
        (Rs[:, 0, 2] - Rs[:, 2, 0]) / (4 * w),
        (Rs[:, 1, 0] - Rs[:, 0, 1]) / (4 * w),
    ], axis=1)
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def quaternion_product(qs: np.ndarray) -> UnitQuaternion:
    """Ordered product q_0 q_1 ... q_{K-1} of a (K, 4) stack."""
    acc = np.array([1.0, 0.0, 0.0, 0.0])
    for q in qs:
        acc = qmul(acc, q)
    return UnitQuaternion.from_array(acc)


# Gell-Mann matrices and the SU(3) quantization targets of the four-band lift.
GELL_MANN = {
    1: np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], complex),
    2: np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]]),
    3: np.array([[1, 0, 0], [0, -1, 0], [0, 0, 0]], complex),
    4: np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]], complex),
    5: np.array([[0, 0, -1j], [0, 0, 0], [1j, 0, 0]]),
    6: np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]], complex),
}

# Generator name -> Gell-Mann index; J_ij lifts to +(i/2) lambda.
J_TO_GELL_MANN = {"J12": 3, "J23": 2, "J34": 1, "J13": 6, "J24": 5, "J14": 4}
_GM_TO_Q16 = {3: "q12", 2: "q23", 1: "q34", 6: "q13", 5: "q24", 4: "q14"}


def _complement(lam: np.ndarray) -> np.ndarray:
    support = np.abs(lam).sum(axis=0) + np.abs(lam).sum(axis=1) > 0
    return np.diag((~support).astype(complex))


def su3_targets() -> list[tuple[str, np.ndarray]]:
    """Labelled SU(3) targets for the accumulated four-band lift."""
    out = [("1", np.eye(3, dtype=complex))]
    for d in ([-1, -1, 1], [-1, 1, -1], [1, -1, -1]):
        out.append(("-1", np.diag(np.array(d, complex))))
    for a, name in _GM_TO_Q16.items():
        lam = GELL_MANN[a]
        p = _complement(lam)
        out.append((name, 1j * lam + p))
        out.append(("-" + name, -1j * lam + p))
    l31 = GELL_MANN[3] @ GELL_MANN[1]
    e33 = np.diag([0, 0, 1]).astype(complex)
    # +lambda3 lambda1 maps to -q1234 and vice versa.
    out.append(("-q1234", l31 + e33))
    out.append(("q1234", -l31 + e33))
    return out


def su3_to_q16(U: np.ndarray, tol: float = 0.1) -> tuple[tuple[str, ...], float]:
    """Q16 labels of the nearest SU(3) target(s) by Frobenius distance.

    Several labels are returned when their targets coincide; the
    lambda3 lambda1 products equal i lambda2, so the q1234 and q23
    families share matrices.
    """
    scored = [(float(np.linalg.norm(U - T)), name) for name, T in su3_targets()]
    dist = min(d for d, _ in scored)
    if dist >= tol:
        raise NotQuantized(f"SU(3) lift is {dist:.3g} from every Q16 target", dist)
    labels = []
    for d, name in scored:
        if d - dist < 1e-9 and name not in labels:
            labels.append(name)
    return tuple(labels), dist
