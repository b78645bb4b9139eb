"""Braid words in B3/B4 and their band-space and SU(2) representations."""
from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.linalg import expm

from .quaternion_charge import (
    GELL_MANN,
    J_TO_GELL_MANN,
    UnitQuaternion,
    q8_residual,
    su2_to_q8,
    su3_to_q16,
)
from .errors import NotQuantized

# Antisymmetric generators. L_y follows the sign that makes
# exp(pi/2 L_y) = M(b12) M(b23) M(b12)^T.
L_X = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], float)
L_Y = np.array([[0, 0, -1], [0, 0, 0], [1, 0, 0]], float)
L_Z = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], float)
M_A = np.array([[0, -1, 0], [1, 0, -1], [0, 1, 0]], float) / np.sqrt(2)
M_B = np.array([[0, 1, 0], [-1, 0, -1], [0, 1, 0]], float) / np.sqrt(2)


def _j(a: int, b: int) -> np.ndarray:
    m = np.zeros((4, 4))
    m[a - 1, b - 1] = -1.0
    m[b - 1, a - 1] = 1.0
    return m


# J_ij rotates matrix indices (5-j, 5-i).
GENERATORS: dict[str, np.ndarray] = {
    "L_x": L_X, "L_y": L_Y, "L_z": L_Z, "M_a": M_A, "M_b": M_B,
    "J12": _j(3, 4), "J23": _j(2, 3), "J34": _j(1, 2),
    "J13": _j(2, 4), "J24": _j(1, 3), "J14": _j(1, 4),
}


def expm_antisym(A: np.ndarray) -> np.ndarray:
    """exp(A) for real antisymmetric A; Rodrigues form for 3x3."""
    A = np.asarray(A, dtype=float)
    if A.shape == (3, 3):
        a = np.array([A[2, 1], A[0, 2], A[1, 0]])
        th = float(np.linalg.norm(a))
        if th < 1e-15:
            return np.eye(3) + A
        K = A / th
        return np.eye(3) + np.sin(th) * K + (1.0 - np.cos(th)) * (K @ K)
    return expm(A)


def rotation_generator(R: np.ndarray) -> tuple[np.ndarray, float]:
    """Unit-axis generator K and angle in [0, pi] with exp(angle K) = R (3x3)."""
    R = np.asarray(R, float)
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    th = float(np.arccos(c))
    if th < 1e-12:
        return np.zeros((3, 3)), 0.0
    if np.pi - th > 1e-9:
        a = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
        a /= np.linalg.norm(a)
    else:
        S = (R + np.eye(3)) / 2.0
        col = int(np.argmax(np.diag(S)))
        a = S[:, col] / np.sqrt(S[col, col])
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return K, th


@dataclass(frozen=True)
class BraidWord:
    """Word in the braid group on 3 or 4 strands.

    Letters are (generator_index, exponent) with generator i exchanging
    strands i and i+1 and exponent +1 or -1.
    """

    strands: int
    letters: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.strands not in (3, 4):
            raise ValueError("only 3 or 4 strands are supported")
        for g, e in self.letters:
            if not 1 <= g < self.strands:
                raise ValueError(f"generator b{g}{g + 1} invalid for {self.strands} strands")
            if e not in (1, -1):
                raise ValueError("letter exponents must be +1 or -1")

    def __str__(self) -> str:
        return format_word(self)

    def __len__(self) -> int:
        return len(self.letters)

    def inverse(self) -> "BraidWord":
        return BraidWord(self.strands, tuple((g, -e) for g, e in reversed(self.letters)))

    def power(self, k: int) -> "BraidWord":
        base = self if k >= 0 else self.inverse()
        return BraidWord(self.strands, base.letters * abs(k))

    def is_reduced(self) -> bool:
        return all(
            not (a[0] == b[0] and a[1] == -b[1]) for a, b in zip(self.letters, self.letters[1:])
        )

    def sort_key(self) -> tuple:
        return (len(self.letters), tuple((g, 0 if e > 0 else 1) for g, e in self.letters))


_TOKEN = re.compile(r"^b(\d)(\d)(?:\^(-?\d+))?$")


def parse_word(text: str, strands: int = 3) -> BraidWord:
    """Parse 'b12 b23^-1 b12^2'; the empty string is the identity word."""
    letters: list[tuple[int, int]] = []
    for tok in text.split():
        m = _TOKEN.match(tok)
        if not m:
            raise ValueError(f"bad braid token {tok!r}")
        i, j = int(m.group(1)), int(m.group(2))
        if j != i + 1:
            raise ValueError(f"generator {tok!r} must exchange adjacent strands")
        k = int(m.group(3)) if m.group(3) is not None else 1
        letters.extend([(i, 1 if k > 0 else -1)] * abs(k))
    return BraidWord(strands, tuple(letters))


def format_word(w: BraidWord) -> str:
    """One token per letter, e.g. 'b12 b23^-1'."""
    return " ".join(f"b{g}{g + 1}" + ("" if e > 0 else "^-1") for g, e in w.letters)


def free_reduce(letters) -> tuple[tuple[int, int], ...]:
    out: list[tuple[int, int]] = []
    for g, e in letters:
        if out and out[-1] == (g, -e):
            out.pop()
        else:
            out.append((g, e))
    return tuple(out)


def compose(w1: BraidWord, w2: BraidWord) -> BraidWord:
    """Freely reduced concatenation w1 w2."""
    if w1.strands != w2.strands:
        raise ValueError("cannot compose words on different strand counts")
    return BraidWord(w1.strands, free_reduce(w1.letters + w2.letters))


def _generator_matrices(strands: int) -> dict[int, np.ndarray]:
    if strands == 3:
        gens = {1: L_X, 2: L_Z}
    else:
        gens = {1: GENERATORS["J12"], 2: GENERATORS["J23"], 3: GENERATORS["J34"]}
    return {g: np.rint(expm_antisym(np.pi / 2 * G)).astype(int) for g, G in gens.items()}


_GEN_MATS = {3: _generator_matrices(3), 4: _generator_matrices(4)}


def to_matrix(w: BraidWord) -> np.ndarray:
    """Signed permutation matrix of a word; letters multiply left to right."""
    mats = _GEN_MATS[w.strands]
    M = np.eye(w.strands, dtype=int)
    for g, e in w.letters:
        M = M @ (mats[g] if e > 0 else mats[g].T)
    return M


def is_signed_perm(M: np.ndarray) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    if not np.all(np.isin(M, (-1, 0, 1))):
        return False
    nz = M != 0
    return bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1))


_C4, _S4 = np.cos(np.pi / 4), np.sin(np.pi / 4)
_SU2_GENS = {
    (1, 1): np.array([_C4, _S4, 0.0, 0.0]),
    (1, -1): np.array([_C4, -_S4, 0.0, 0.0]),
    (2, 1): np.array([_C4, 0.0, 0.0, _S4]),
    (2, -1): np.array([_C4, 0.0, 0.0, -_S4]),
}


def to_su2(w: BraidWord) -> UnitQuaternion:
    """Ordered product of the quarter-turn lifts of the letters (3 strands)."""
    from .quaternion_charge import qmul

    if w.strands != 3:
        raise ValueError("SU(2) lift is defined for 3 strands only")
    acc = np.array([1.0, 0.0, 0.0, 0.0])
    for letter in w.letters:
        acc = qmul(acc, _SU2_GENS[letter])
    return UnitQuaternion.from_array(acc)


def to_su3(w: BraidWord) -> np.ndarray:
    """Ordered product of exp(i pi/4 lambda) lifts of the letters (4 strands)."""
    if w.strands != 4:
        raise ValueError("SU(3) lift is defined for 4 strands only")
    names = {1: "J12", 2: "J23", 3: "J34"}
    U = np.eye(3, dtype=complex)
    for g, e in w.letters:
        lam = GELL_MANN[J_TO_GELL_MANN[names[g]]]
        U = U @ expm(1j * e * np.pi / 4 * lam)
    return U


def matrix_equivalent(w1: BraidWord, w2: BraidWord) -> tuple[bool, bool | None]:
    """(equal band-space matrices, equal SU(2) lifts or None for 4 strands)."""
    if w1.strands != w2.strands:
        raise ValueError("strand counts differ")
    same_matrix = bool(np.array_equal(to_matrix(w1), to_matrix(w2)))
    if w1.strands != 3:
        return same_matrix, None
    return same_matrix, to_su2(w1).close_to(to_su2(w2))


def _letters(strands: int) -> list[tuple[int, int]]:
    return [(g, e) for g in range(1, strands) for e in (1, -1)]


def _qkey(q: UnitQuaternion) -> tuple[int, ...]:
    return tuple(int(round(v * 1e8)) for v in q.as_array())


def enumerate_group_G() -> list[tuple[UnitQuaternion, BraidWord]]:
    """Elements of the lifted three-strand group with shortest canonical words."""
    start = BraidWord(3)
    seen = {_qkey(to_su2(start)): (to_su2(start), start)}
    frontier = deque([start])
    while frontier:
        w = frontier.popleft()
        for letter in _letters(3):
            nxt = BraidWord(3, free_reduce(w.letters + (letter,)))
            if len(nxt) != len(w) + 1:
                continue
            q = to_su2(nxt)
            key = _qkey(q)
            if key not in seen:
                seen[key] = (q, nxt)
                frontier.append(nxt)
    return list(seen.values())


def matrix_image_B3() -> list[np.ndarray]:
    """Distinct band-space matrices of three-strand words."""
    out: dict[bytes, np.ndarray] = {}
    for _, w in enumerate_group_G():
        M = to_matrix(w)
        out.setdefault(M.tobytes(), M)
    return list(out.values())


_GM_TEXT = (
    "b12", "b12^-1", "b23", "b23^-1",
    "b12 b23 b12^-1", "b12 b23^-1 b12^-1",
    "b12^2", "b12^-2", "b23^2", "b23^-2",
    "b12 b23 b12", "b12 b23^-1 b12",
    "b12 b23^2", "b12 b23^-2", "b12^-1 b23^2", "b12^-1 b23^-2",
    "b23 b12^2", "b23 b12^-2", "b23^-1 b12^2", "b23^-1 b12^-2",
)


def mirror_subset_Gm() -> list[BraidWord]:
    """Half-path words compatible with mirror symmetry (sign choices expanded)."""
    return [parse_word(t) for t in _GM_TEXT]


@dataclass(frozen=True)
class CatalogEntry:
    """One charge / holonomy / braid-word row.

    `charge` is the listed label. `lift_charge` is what the
    lift of `braid_word` actually gives, and `note` explains any
    disagreement between the two or with the holonomy.
    """

    strands: int
    charge: str
    generator: str
    axis_generator: np.ndarray = field(compare=False)
    angle: float
    holonomy: np.ndarray = field(compare=False)
    braid_word: BraidWord
    half_word: BraidWord | None = None
    lift_charge: str | None = None
    note: str = ""

    def holonomy_matches_exponential(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(expm_antisym(self.angle * self.axis_generator) - self.holonomy)) < tol)

    def word_matches_holonomy(self) -> bool:
        return bool(np.array_equal(to_matrix(self.braid_word), self.holonomy))

    def to_dict(self) -> dict:
        return {
            "strands": self.strands,
            "charge": self.charge,
            "generator": self.generator,
            "axis_generator": np.round(self.axis_generator, 15).tolist(),
            "angle": self.angle,
            "holonomy": np.asarray(self.holonomy).astype(int).tolist(),
            "braid_word": format_word(self.braid_word),
            "half_word": None if self.half_word is None else format_word(self.half_word),
            "lift_charge": self.lift_charge,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CatalogEntry":
        n = d["strands"]
        return cls(
            strands=n,
            charge=d["charge"],
            generator=d["generator"],
            axis_generator=np.array(d["axis_generator"], float),
            angle=float(d["angle"]),
            holonomy=np.array(d["holonomy"], int),
            braid_word=parse_word(d["braid_word"], n),
            half_word=None if d["half_word"] is None else parse_word(d["half_word"], n),
            lift_charge=d["lift_charge"],
            note=d["note"],
        )


def _lift_charge(word: BraidWord) -> str | None:
    try:
        if word.strands == 3:
            return su2_to_q8(to_su2(word), tol=1e-6)
        return "/".join(su3_to_q16(to_su3(word), tol=1e-6)[0])
    except NotQuantized:
        return None


def _entry(strands, charge, gen_name, angle, word_text, half_text=None, axis=None):
    word = parse_word(word_text, strands)
    half = parse_word(half_text, strands) if half_text is not None else None
    if axis is None:
        if gen_name in ("J12+J34", "J12-J34"):
            sign = 1 if gen_name == "J12+J34" else -1
            axis = GENERATORS["J12"] + sign * GENERATORS["J34"]
        else:
            axis = GENERATORS[gen_name]
    hol = np.rint(expm_antisym(angle * axis)).astype(int)
    lift = _lift_charge(word)
    notes = []
    if not np.array_equal(to_matrix(word), hol):
        notes.append("word matrix differs from the holonomy")
    if lift is None:
        notes.append("word lift is not a quantized charge")
    elif charge not in lift.split("/"):
        notes.append(f"word lifts to {lift}")
    return CatalogEntry(strands, charge, gen_name, axis, angle, hol, word, half, lift, "; ".join(notes))


def _root_axis(word_text: str) -> np.ndarray:
    K, _ = rotation_generator(to_matrix(parse_word(word_text)))
    return K


def catalog() -> list[CatalogEntry]:
    """Charge / holonomy / braid catalogue for three and four bands."""
    pi = np.pi
    e: list[CatalogEntry] = [
        _entry(3, "1", "L_x", 0.0, "", ""),
        _entry(3, "i", "L_x", pi, "b12 b12", "b12"),
        _entry(3, "-i", "L_x", -pi, "b12^-1 b12^-1", "b12^-1"),
        _entry(3, "k", "L_z", pi, "b23 b23", "b23"),
        _entry(3, "-k", "L_z", -pi, "b23^-1 b23^-1", "b23^-1"),
        _entry(3, "j", "L_y", pi, "b12 b23 b12^-1 b12 b23 b12^-1", "b12 b23 b12^-1"),
        _entry(3, "-j", "L_y", -pi, "b12 b23^-1 b12^-1 b12 b23^-1 b12^-1", "b12 b23^-1 b12^-1"),
        _entry(3, "-1", "M_a", 2 * pi, "b23 b12 b23 b23 b12 b23", "b23 b12 b23"),
        _entry(3, "-1", "M_b", 2 * pi, "b12^-1 b23 b12^-1 b12^-1 b23 b12^-1", "b12^-1 b23 b12^-1"),
        _entry(3, "-1", "M_a", 2 * pi, "b12 b23 b12 b12 b23 b12", "b12 b23 b12"),
        _entry(3, "-1", "L_x", 2 * pi, "b12^4"),
        _entry(3, "-1", "L_z", 2 * pi, "b23^4"),
        _entry(3, "-1", "L_y", 2 * pi, "b12 b23 b12^-1 " * 4),
        _entry(3, "-1", "L_y", -2 * pi, "b12 b23^-1 b12^-1 " * 4),
    ]
    for root in ("b12 b23^2", "b23 b12^2"):
        e.append(_entry(3, "-1", f"axis({root})", 2 * pi, (root + " ") * 4, axis=_root_axis(root)))
    e.append(_entry(3, "-1", "M_a", 2 * pi, "b12 b23 b12 " * 2, "b12 b23 b12"))
    e.append(_entry(3, "-1", "axis(b12 b23^-1 b12)", 2 * pi, "b12 b23^-1 b12 " * 2,
                    "b12 b23^-1 b12", axis=_root_axis("b12 b23^-1 b12")))
    e.append(_entry(3, "-1", "M_a", 2 * pi, "b23 b12 b23 " * 2, "b23 b12 b23"))
    e.append(_entry(3, "-1", "axis(b23 b12^-1 b23)", 2 * pi, "b23 b12^-1 b23 " * 2,
                    "b23 b12^-1 b23", axis=_root_axis("b23 b12^-1 b23")))

    e.append(_entry(4, "1", "J12", 0.0, "", ""))
    for g, w in (("J12", "b12"), ("J23", "b23"), ("J34", "b34")):
        for s in (1, -1):
            e.append(_entry(4, "-1", g, s * 2 * pi, f"{w}^{4 * s}"))
    q16_rows = [
        ("q12", "J12", 1, "b12^2", "b12"),
        ("-q12", "J12", -1, "b12^-2", "b12^-1"),
        ("q12", "J12", 1, "b23^-2 b12^-1 b23^-2 b12^-1", None),
        ("-q12", "J12", -1, "b12 b23^-2 b12 b23^-2", None),
        ("q23", "J23", 1, "b23^2", "b23"),
        ("-q23", "J23", -1, "b23^-2", "b23^-1"),
        ("q34", "J34", 1, "b34^2", "b34"),
        ("-q34", "J34", -1, "b34^-2", "b34^-1"),
        ("q34", "J34", 1, "b34^-1 b23^-2 b34^-1 b23^-2", None),
        ("-q34", "J34", -1, "b23^-2 b34 b23^-2 b34", None),
        ("q13", "J13", 1, "b12 b23 b12^-1 b12 b23 b12^-1", "b12 b23 b12^-1"),
        ("-q13", "J13", -1, "b12 b23^-1 b12^-1 b12 b23^-1 b12^-1", "b12 b23^-1 b12^-1"),
        ("q24", "J24", 1, "b23 b34 b23^-1 b23 b34 b23^-1", "b23 b34 b23^-1"),
        ("-q24", "J24", -1, "b23 b34^-1 b23^-1 b23 b34^-1 b23^-1", "b23 b34^-1 b23^-1"),
        ("q14", "J14", 1, "b12 b23 b34 b23^-1 b12^-1 b12 b23 b34 b23^-1 b12^-1",
         "b12 b23 b34 b23^-1 b12^-1"),
        ("-q14", "J14", -1, "b12 b23 b34^-1 b23^-1 b12^-1 b12 b23 b34^-1 b23^-1 b12^-1",
         "b12 b23 b34^-1 b23^-1 b12^-1"),
        ("q1234", "J12+J34", 1, "b12^2 b34^2", None),
        ("-q1234", "J12-J34", 1, "b12^2 b34^-2", None),
    ]
    for charge, g, sign, word, half in q16_rows:
        e.append(_entry(4, charge, g, sign * pi, word, half))
    return e


def catalog_to_json(entries: list[CatalogEntry]) -> str:
    return json.dumps([c.to_dict() for c in entries], indent=2)


def catalog_from_json(text: str) -> list[CatalogEntry]:
    return [CatalogEntry.from_dict(d) for d in json.loads(text)]


def half_word_candidates(strands: int, max_len: int = 5) -> list[BraidWord]:
    """Catalogue half-words first, then every reduced word up to max_len."""
    seen: dict[tuple, BraidWord] = {}
    listed = mirror_subset_Gm() if strands == 3 else []
    listed += [c.half_word for c in catalog() if c.strands == strands and c.half_word is not None]
    for w in listed:
        seen.setdefault(w.letters, w)
    for n in range(1, max_len + 1):
        for letters in product(_letters(strands), repeat=n):
            red = free_reduce(letters)
            if len(red) == n:
                seen.setdefault(red, BraidWord(strands, red))
    return sorted(seen.values(), key=BraidWord.sort_key)


__all__ = [
    "BraidWord", "CatalogEntry", "GENERATORS", "L_X", "L_Y", "L_Z", "M_A", "M_B",
    "catalog", "catalog_from_json", "catalog_to_json", "compose", "enumerate_group_G",
    "expm_antisym", "format_word", "free_reduce", "half_word_candidates", "is_signed_perm",
    "matrix_equivalent", "matrix_image_B3", "mirror_subset_Gm", "parse_word",
    "q8_residual", "rotation_generator", "to_matrix", "to_su2", "to_su3",
]
