import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from braidtopo.braid_algebra import (
    L_X,
    L_Y,
    L_Z,
    M_A,
    expm_antisym,
    format_word,
    parse_word,
    to_matrix,
    to_su2,
)
from braidtopo.errors import GapClosed, GaugeAmbiguous, NotInCatalog, NotQuantized
from braidtopo.holonomy import (
    PathGrid,
    braid_word_lookup,
    classify,
    classify_q16,
    eigenframe,
    eigenframe_from_matrices,
    quantize_signed_perm,
    robustness_study,
    strand_trajectories,
    su2_holonomy,
    wilson_loop,
    word_for_matrix,
)
from braidtopo.models import (
    MAIN_TEXT_K,
    TABLE_LABELS,
    FrameSpec,
    ThreeBandParams,
    bloch_path,
    frame_path,
    table_s3_params,
)
from braidtopo.quaternion_charge import UnitQuaternion, quaternion_to_rotation, su2_to_q8
from oracles import bloch_oracle, transport_with_lift

K = table_s3_params("k")
J = table_s3_params("j")

# Charges and half-words at N = 1024 under the fixed conventions.
EXPECTED = {
    "i": ("i", "b12"),
    "-i": ("-i", "b12^-1"),
    "k": ("k", "b23"),
    "-k": ("k", "b23"),
    "j": ("j", "b12 b23^-1 b12^-1"),
    "-j": ("-j", "b12 b23 b12^-1"),
    "-1(g)": ("-1", "b12 b23^-1 b12"),
    "-1(h)": ("i", "b12"),
    "-1(i)": ("-1", "b12 b23 b12"),
}


@pytest.fixture(scope="module")
def reports():
    return {lab: classify(bloch_path(table_s3_params(lab)), PathGrid.bz(1024)) for lab in TABLE_LABELS}


# ---- grid and frame ----

def test_grid_validation():
    with pytest.raises(ValueError):
        PathGrid(np.array([0.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        PathGrid(np.linspace(0, 1, 5), (0, 2, 3))
    with pytest.raises(ValueError):
        PathGrid.bz(101)
    g = PathGrid.bz(8)
    assert g.mirror_indices == (0, 4, 8)
    assert g.t_values[4] == 0.0


def test_constant_frame_is_static():
    H = np.broadcast_to(np.diag([1.0, 2.0, 3.0]), (5, 3, 3))
    fr = eigenframe_from_matrices(H, np.arange(5.0))
    assert np.allclose(fr.vectors, fr.vectors[0])
    assert np.allclose(wilson_loop(fr), np.eye(3))
    assert np.allclose(su2_holonomy(fr).as_array(), [1, 0, 0, 0])


def test_k_row_eigenvectors_at_mirror_points():
    fr = eigenframe(bloch_path(K), PathGrid.bz(1024))
    assert np.allclose(np.abs(fr.vectors[512][:, 1]), [0, 1, 0], atol=1e-12)
    assert np.allclose(np.abs(fr.vectors[0][:, 1]), [1, 0, 0], atol=1e-12)


def test_frame_orthonormal_and_smooth():
    fr = eigenframe(bloch_path(J), PathGrid.bz(512))
    G = np.einsum("kji,kjl->kil", fr.vectors, fr.vectors)
    assert np.max(np.abs(G - np.eye(3))) < 1e-10
    ov = np.einsum("kij,kij->kj", fr.vectors[:-1], fr.vectors[1:])
    assert np.all(ov > 0)


def test_gap_closed_at_grid_point():
    with pytest.raises(GapClosed):
        eigenframe(bloch_path(MAIN_TEXT_K), PathGrid.bz(1024))


def test_gap_closed_between_samples():
    # Two levels cross between the samples without touching on the grid.
    H = np.array([np.diag([-1.0, 1.0, 5.0]), np.diag([1.0, -1.0, 5.0])])
    with pytest.raises(GapClosed, match="bands 1,2 cross"):
        eigenframe_from_matrices(H, np.array([0.0, 1.0]))


def test_spread_overlap_is_ambiguous():
    v = np.ones(3) / np.sqrt(3)
    Q = np.eye(3) - 2 * np.outer(v, v)
    E = np.diag([1.0, 2.0, 3.0])
    with pytest.raises(GaugeAmbiguous):
        eigenframe_from_matrices(np.array([E, Q @ E @ Q.T]), np.array([0.0, 1.0]))


def test_swap_between_samples_reports_crossing():
    path = frame_path(FrameSpec(3, (1.0, 2.0, 3.0), (("L_z", 0.0, 2 * np.pi),)))
    with pytest.raises(GapClosed):
        eigenframe(path, PathGrid.uniform(0, 2 * np.pi, 4))


# ---- Wilson loop and lift against the transport ODE ----

@pytest.mark.parametrize("label", TABLE_LABELS)
def test_holonomy_matches_transport_ode(label, reports):
    p = table_s3_params(label)
    H, dH = bloch_oracle(p)
    r = reports[label]
    B0, B1, q = transport_with_lift(H, dH, -np.pi, np.pi)
    assert np.allclose(B0.T @ B1, r.W_full, atol=1e-9)
    assert np.allclose(q, r.su2_lift.as_array(), atol=1e-9)
    B0, Bm, _ = transport_with_lift(H, dH, -np.pi, 0.0)
    assert np.allclose(B0.T @ Bm, r.W_half_minus, atol=1e-9)


def test_k_row_full_holonomy(reports):
    assert np.allclose(reports["k"].W_full, np.diag([-1, -1, 1]), atol=1e-3)


@pytest.mark.parametrize("label", TABLE_LABELS)
def test_table_charges_and_words(label, reports):
    r = reports[label]
    charge, half = EXPECTED[label]
    assert r.charge == charge
    assert format_word(r.half_word) == half
    assert r.diagnostics["residual_W_full"] < 1e-2


def test_duplicated_k_rows_are_consistent(reports):
    rk, rmk = reports["k"], reports["-k"]
    assert {rk.charge, rmk.charge} <= {"k", "-k"}
    assert su2_to_q8(to_su2(rk.full_word)) == rk.charge
    # The reversed orientation realises the opposite sign.
    rev = classify(bloch_path(K.reversed()), PathGrid.bz(1024))
    assert rev.charge == "-k"


@pytest.mark.parametrize("label", TABLE_LABELS)
def test_report_invariants(label, reports):
    r = reports[label]
    assert np.allclose(r.W_half_minus @ r.W_half_plus, r.W_full, atol=1e-6)
    Wq = quantize_signed_perm(r.W_full)
    assert np.allclose(quaternion_to_rotation(r.su2_lift), r.W_full, atol=1e-6)
    assert np.array_equal(to_matrix(r.full_word), Wq)
    assert su2_to_q8(to_su2(r.full_word)) == r.charge
    Pm = quantize_signed_perm(r.W_half_minus)
    assert np.array_equal(Pm, quantize_signed_perm(r.W_half_plus))
    assert np.array_equal(Pm @ Pm, Wq)
    zak = [0.0 if d > 0 else np.pi for d in np.diag(Wq)]
    sums = sorted(np.mod(np.add(r.theta_minus, r.theta_plus), 2 * np.pi))
    assert np.allclose(sorted(zak), sums)


def test_k_row_half_phases(reports):
    r = reports["k"]
    assert r.theta_minus == [0.0, np.pi, 0.0]
    assert r.theta_plus == [0.0, 0.0, np.pi]
    assert np.allclose(np.mod(np.add(r.theta_minus, r.theta_plus), 2 * np.pi), [0, np.pi, np.pi])


def test_minus_k_swaps_half_phases():
    r = classify(bloch_path(K.reversed()), PathGrid.bz(1024))
    assert r.theta_minus == [0.0, 0.0, np.pi]
    assert r.theta_plus == [0.0, np.pi, 0.0]


def test_minus_one_g_half_phases(reports):
    r = reports["-1(g)"]
    assert r.theta_minus[1] == r.theta_plus[1] == np.pi
    assert np.mod(r.theta_minus[1] + r.theta_plus[1], 2 * np.pi) == 0.0


def test_minus_one_i_yang_baxter_class(reports):
    cls = [format_word(w) for w in reports["-1(i)"].half_words[0]]
    assert cls == ["b12 b23 b12", "b23 b12 b23"]


def test_report_json(reports):
    d = json.loads(reports["k"].to_json())
    assert d["charge"] == "k"
    assert d["half_word"] == "b23"
    assert d["full_word"] == "b23 b23"
    assert d["theta_minus"] == [0, 3.14159, 0]
    assert "conventions" in d["diagnostics"]


# ---- quantization and lookup ----

def test_quantize_examples():
    assert np.array_equal(quantize_signed_perm(np.diag([-1.0002, -0.9999, 1.0001])), np.diag([-1, -1, 1]))
    with pytest.raises(NotQuantized):
        quantize_signed_perm(expm_antisym(np.pi / 3 * L_Z))
    with pytest.raises(NotQuantized):
        quantize_signed_perm(np.ones((3, 3)))


def test_k_row_half_holonomy(reports):
    P = quantize_signed_perm(reports["k"].W_half_minus)
    assert np.array_equal(P, np.rint(expm_antisym(np.pi / 2 * L_Z)))


def test_lookup_examples():
    Pz = quantize_signed_perm(expm_antisym(np.pi / 2 * L_Z))
    assert format_word(braid_word_lookup(Pz, UnitQuaternion(0, 0, 0, 1))[0]) == "b23"
    Py = quantize_signed_perm(expm_antisym(np.pi / 2 * L_Y))
    assert format_word(braid_word_lookup(Py, UnitQuaternion(0, 0, -1, 0))[0]) == "b12 b23 b12^-1"
    with pytest.raises(NotInCatalog):
        braid_word_lookup(Py, UnitQuaternion(0, 0, 1, 0))
    Pa = quantize_signed_perm(expm_antisym(np.pi * M_A))
    cls = braid_word_lookup(Pa, UnitQuaternion(-1, 0, 0, 0))
    assert [format_word(w) for w in cls] == ["b12 b23 b12", "b23 b12 b23"]


def test_word_for_matrix():
    assert format_word(word_for_matrix(to_matrix(parse_word("b23 b12")))) == "b23 b12"
    assert len(word_for_matrix(np.eye(3, dtype=int))) == 0


# ---- frame paths ----

def test_full_turn_frame_is_minus_one():
    for G in ("L_x", "L_z", "M_a"):
        path = frame_path(FrameSpec(3, (1.0, 2.0, 3.0), ((G, 0.0, 2 * np.pi),)))
        r = classify(path, PathGrid.uniform(0, 2 * np.pi, 1024), require_mirror=False)
        assert r.charge == "-1"
        assert np.allclose(r.W_full, np.eye(3), atol=1e-9)
        assert np.allclose(r.su2_lift.as_array(), [-1, 0, 0, 0], atol=1e-9)


def test_four_band_path_matrices():
    spec = FrameSpec(4, (1.0, 2.0, 3.0, 4.0),
                     (("J12", 0.0, np.pi / 2), ("J23", np.pi / 2, np.pi), ("J34", np.pi, 1.5 * np.pi)))
    fr = eigenframe(frame_path(spec), PathGrid.uniform(0, 1.5 * np.pi, 3072))
    expect = {
        1024: ([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], "b12"),
        2048: ([[1, 0, 0, 0], [0, 0, -1, 0], [0, 0, 0, -1], [0, 1, 0, 0]], "b12 b23"),
        3072: ([[0, -1, 0, 0], [0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0]], "b12 b23 b34"),
    }
    for idx, (M, word) in expect.items():
        W = wilson_loop(fr, 0, idx)
        assert np.allclose(W, M, atol=1e-3)
        assert format_word(word_for_matrix(quantize_signed_perm(W))) == word


def test_q16_full_turn():
    path = frame_path(FrameSpec(4, (1.0, 2.0, 3.0, 4.0), (("J23", 0.0, 2 * np.pi),)))
    assert classify_q16(path, PathGrid.uniform(0, 2 * np.pi, 1024)).charge == "-1"


def test_q16_half_turn():
    path = frame_path(FrameSpec(4, (1.0, 2.0, 3.0, 4.0), (("J23", 0.0, np.pi),)))
    r = classify(path, PathGrid.uniform(0, np.pi, 1024))
    assert r.charge == "q23"
    assert format_word(r.full_word) == "b23 b23"
    assert set(r.diagnostics["charge_candidates"]) == {"q23", "-q1234"}


def test_open_path_rejected():
    path = frame_path(FrameSpec(3, (1.0, 2.0, 3.0), (("L_z", 0.0, 1.0),)))
    with pytest.raises(ValueError):
        classify(path)


# ---- strands ----

def test_strand_table_shape_and_header():
    fr = eigenframe(bloch_path(K), PathGrid.bz(64))
    tab = strand_trajectories(fr)
    assert tab.header == ["t", "band", "eigenvalue", "c1", "c2", "c3"]
    assert tab.rows.shape == (3 * 65, 6)
    assert tab.to_csv().splitlines()[0] == "t,band,eigenvalue,c1,c2,c3"


def test_strand_constant_rows():
    H = np.broadcast_to(np.diag([1.0, 2.0, 3.0]), (4, 3, 3))
    tab = strand_trajectories(eigenframe_from_matrices(H, np.arange(4.0)))
    for band in (1, 2, 3):
        rows = tab.rows[tab.rows[:, 1] == band]
        assert np.allclose(rows[:, 2:], rows[0, 2:])


def test_k_row_middle_band_moves_to_component_one():
    fr = eigenframe(bloch_path(K), PathGrid.bz(1024))
    tab = strand_trajectories(fr)
    mid = tab.rows[tab.rows[:, 1] == 2]
    w = mid[:, 3] ** 2
    assert w[512] < 1e-12 and w[0] > 1 - 1e-12


# ---- properties ----

@pytest.mark.parametrize("label", TABLE_LABELS)
def test_connection_rule_converges(label):
    path = bloch_path(table_s3_params(label))
    errs = []
    for N in (256, 512, 1024, 2048):
        W = wilson_loop(eigenframe(path, PathGrid.bz(N)), method="connection")
        errs.append(np.max(np.abs(W - quantize_signed_perm(W))))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= errs[0] / 2


@given(st.sampled_from(TABLE_LABELS), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_gauge_seed_does_not_change_outputs(label, seed):
    path = bloch_path(table_s3_params(label))
    a = classify(path, PathGrid.bz(256))
    b = classify(path, PathGrid.bz(256), sign_seed=seed)
    assert a.charge == b.charge
    assert [str(w) for w in a.half_words[0]] == [str(w) for w in b.half_words[0]]
    assert a.theta_minus == b.theta_minus and a.theta_plus == b.theta_plus
    assert np.array_equal(quantize_signed_perm(a.W_full), quantize_signed_perm(b.W_full))


# ---- robustness ----

def test_robustness_zero_and_small():
    rows = robustness_study(J, [0.0, 0.05], seeds=5, N=256)
    assert [r.fraction for r in rows] == [1.0, 1.0]
    assert rows[0].gap_closed == 0


def test_robustness_large_v_changes_charge():
    r = robustness_study(J, [3.0], seeds=20, N=256)[0]
    assert r.gap_closed + r.invariant + r.failures == 20
    assert r.fraction < 0.5


def test_robustness_excludes_gap_closed(monkeypatch):
    import braidtopo.holonomy as hol

    real = hol.eigenframe

    def fake(path, grid, *a, **kw):
        if "seed=1)" in path.label:
            raise GapClosed("forced")
        return real(path, grid, *a, **kw)

    monkeypatch.setattr(hol, "eigenframe", fake)
    r = robustness_study(J, [0.05], seeds=4, N=256)[0]
    assert (r.gap_closed, r.invariant, r.failures, r.fraction) == (1, 3, 0, 1.0)
