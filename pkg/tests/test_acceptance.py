"""Acceptance suite: one test per criterion, each printing a PASS line.

Reference tables below are frozen from the published three-decimal fixture
values. Four entries marked "oracle-corrected" disagreed with both the
closed-form solution and the SVD nullspace (which agree with each other to
machine precision and satisfy nodal equilibrium); for those entries the
oracle value wins, per the stated validation policy. Same for the sign of
the third fusion combination, which otherwise would not cancel the removed
member.
"""

import itertools
import re
import time
from collections import Counter

import numpy as np

from conftest import CHAIN_COORDS, prism_coords, random_gp_points
from tensecell import fileio
from tensecell.cell import CellSpec, cell_self_stress
from tensecell.cli import main as cli_main
from tensecell.engine import adhere, fuse, seed, run_script
from tensecell.geometry import general_position
from tensecell.placement import (build_fusion_constraint,
                                 constraint_adjacent_shared3,
                                 plane_adjacent_shared4,
                                 quadric_nonadjacent_shared4, sample_surface)
from tensecell.structure import (assemble_equilibrium_matrix, count_report,
                                 make_state, nullspace_basis,
                                 typology_from_stress)


def report(criterion, message):
    print(f"\ncriterion {criterion}: PASS  {message}")


# ---------------------------------------------------------------------------
# frozen reference basis for the three-cell chain (three-decimal fixture)

W1_REF = {
    ("1", "2"): 1.000, ("1", "3"): -0.924, ("1", "4"): 0.978,
    ("1", "5"): -0.489, ("2", "3"): 1.635,
    ("2", "4"): -1.731,  # oracle-corrected from -1.730 (mis-rounded digit)
    ("2", "5"): 0.865, ("3", "4"): 1.599, ("3", "5"): -0.800,
    ("4", "5"): 0.847,
}
W2_REF = {
    ("2", "3"): 1.000, ("2", "4"): -0.762, ("2", "5"): 0.741,
    ("3", "4"): 2.012, ("3", "5"): -1.957,
    ("4", "5"): 1.492,  # oracle-corrected from -1.491 (sign misprint)
    ("2", "6"): -0.600, ("3", "6"): 1.585, ("4", "6"): -1.208,
    ("5", "6"): 1.175,
}
W3_REF = {
    ("1", "2"): 1.000, ("1", "3"): 0.769, ("2", "3"): -1.250,
    ("2", "6"): 0.938, ("3", "6"): 0.721, ("1", "6"): -0.577,
    ("1", "7"): -0.577, ("2", "7"): 0.938, ("3", "7"): 0.721,
    ("6", "7"): -0.541,
}
W4_REF = {
    ("1", "2"): 0.529, ("1", "3"): -0.186, ("1", "4"): 0.335,
    ("2", "3"): 0.247, ("2", "4"): -0.445, ("3", "4"): 0.157,
    ("2", "6"): 0.371,
    ("3", "6"): -0.131,  # oracle-corrected from 0.000 (entry dropped)
    ("4", "6"): 0.235,
    ("1", "6"): -0.279,  # oracle-corrected from +0.280 (sign misprint)
}


def build_chain_states():
    spec1 = CellSpec(nodes=("1", "2", "3", "4", "5"),
                     coords=tuple(CHAIN_COORDS[n] for n in "12345"),
                     anchor=("1", "2"), anchor_value=1.0)
    state, morpho, _ = seed(spec1)
    spec2 = CellSpec(nodes=("2", "3", "4", "5", "6"),
                     coords=tuple(CHAIN_COORDS[n] for n in "23456"),
                     anchor=("2", "3"), anchor_value=1.0)
    state, morpho, _ = adhere(state, morpho, spec2, shared=("2", "3", "4", "5"))
    spec3 = CellSpec(nodes=("1", "2", "3", "6", "7"),
                     coords=tuple(CHAIN_COORDS[n]
                                  for n in ("1", "2", "3", "6", "7")),
                     anchor=("1", "2"), anchor_value=1.0)
    state, morpho, _ = adhere(state, morpho, spec3, shared=("1", "2", "3", "6"))
    return state, morpho


def column_by_dict(state, col, anchor_member, anchor_value):
    vec = state.basis[:, col]
    k = state.member_index(anchor_member)
    assert vec[k] != 0
    vec = vec * (anchor_value / vec[k])
    return dict(zip(state.members, vec))


def test_criterion_1_adhesion_basis_regression():
    t0 = time.perf_counter()
    state, _ = build_chain_states()
    assert state.dim_w == 4
    checks = [
        (0, ("1", "2"), 1.000, W1_REF),
        (1, ("2", "3"), 1.000, W2_REF),
        (2, ("1", "2"), 1.000, W3_REF),
        (3, ("1", "2"), 0.529, W4_REF),
    ]
    worst = 0.0
    for col, anchor, value, ref in checks:
        got = column_by_dict(state, col, anchor, value)
        for m in state.members:
            want = ref.get(m, 0.0)
            diff = abs(got[m] - want)
            worst = max(worst, diff)
            assert diff <= 5e-4, (col, m, got[m], want)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    report(1, f"four-column basis regression, worst |diff| = {worst:.2e}, "
              f"{elapsed * 1e3:.0f} ms")


def test_criterion_2_fusion_combination_regression():
    state, morpho = build_chain_states()
    W = state.basis
    w1, w2, w3, w4 = (W[:, k] for k in range(4))
    # third combination sign oracle-corrected: +0.247/1.25 cancels the member
    stated = [w1 + (1.635 / 1.25) * w3,
              w2 + (1 / 1.25) * w3,
              w4 + (0.247 / 1.25) * w3]
    # independent elimination oracle, pre-deletion coefficients
    ridx = state.member_index(("2", "3"))
    row = W[ridx, :]
    norms = np.linalg.norm(W, axis=0)
    pivot = int(np.argmax(np.abs(row) / norms))
    survivors_pre = []
    for j in range(4):
        if j == pivot:
            continue
        survivors_pre.append(W[:, j] - (row[j] / row[pivot]) * W[:, pivot])
    for s in survivors_pre:
        assert abs(s[ridx]) <= 1e-9 * np.linalg.norm(s)
    fused, _, _ = fuse(state, morpho, [("2", "3")])
    assert fused.dim_w == 3
    kept = [state.member_index(m) for m in fused.members]
    worst_cos = 1.0
    for k in range(3):
        survivor = np.zeros(len(state.members))
        survivor[kept] = fused.basis[:, k]
        cosines = [np.dot(survivor, s) / np.linalg.norm(survivor) / np.linalg.norm(s)
                   for s in stated]
        best = max(cosines)
        worst_cos = min(worst_cos, best)
        assert best >= 1 - 1e-6
    report(2, f"three surviving states match stated combinations, "
              f"worst cosine = {worst_cos:.9f}")


TRIPLEX_PATTERN = {
    ("A", "E"): -np.sqrt(3), ("B", "F"): -np.sqrt(3), ("C", "D"): -np.sqrt(3),
    ("A", "D"): np.sqrt(3), ("B", "E"): np.sqrt(3), ("C", "F"): np.sqrt(3),
    ("A", "B"): 1.0, ("A", "C"): 1.0, ("B", "C"): 1.0,
    ("D", "E"): 1.0, ("D", "F"): 1.0, ("E", "F"): 1.0,
}

# reference implicit surface z^2 - 2xy + xz + yz - z - y = 0 as a symmetric
# matrix over (1, x, y, z)
SURFACE_REF = np.array([
    [0.0, 0.0, -0.5, -0.5],
    [0.0, 0.0, -1.0, 0.5],
    [-0.5, -1.0, 0.0, 0.5],
    [-0.5, 0.5, 0.5, 1.0],
])


def test_criterion_3_triplex():
    steps = fileio.load_script(fileio.fixture_path("triplex.script"))
    result = run_script(steps)
    state = result.state
    assert len(state.nodes) == 6
    assert len(state.members) == 12
    assert state.dim_w == 1
    ref = np.array([TRIPLEX_PATTERN[m] for m in state.members])
    got = state.basis[:, 0]
    cos = np.dot(ref, got) / np.linalg.norm(ref) / np.linalg.norm(got)
    assert cos >= 1 - 1e-9
    roles = Counter(typology_from_stress(state).values())
    assert roles["strut"] == 3 and roles["cable"] == 9
    # fusion surface: every node of the final structure lies on the quadric
    coords = prism_coords()
    host = CellSpec(nodes=tuple("ABCDE"),
                    coords=tuple(coords[n] for n in "ABCDE"),
                    anchor=("A", "B"), anchor_value=2 / np.sqrt(3))
    hstate, hmorpho, _ = seed(host)
    quad = build_fusion_constraint(hstate, [("B", "D"), ("C", "E")])
    worst = max(abs(quad.normalized_value(coords[n])) for n in "ABCDEF")
    assert worst <= 1e-9
    # stretch goal: the prism frame reproduces the published coefficients
    S = 0.5 * (quad.matrix + quad.matrix.T)
    S = S / np.linalg.norm(S)
    R = SURFACE_REF / np.linalg.norm(SURFACE_REF)
    coeff_diff = min(np.abs(S - R).max(), np.abs(S + R).max())
    assert coeff_diff <= 1e-9
    report(3, f"6/12/1 with prism pattern (cos = {cos:.12f}), 3 struts / 9 "
              f"cables, surface residual {worst:.1e}, coefficient match "
              f"{coeff_diff:.1e}")


def icosahedron_offset_sweep():
    """Parameter-sweep oracle: nullity over strut-pair offsets.

    Three orthogonal slabs of two parallel length-2 struts, each pair
    separated by 2h; 24 cables join nearest ends across slabs. The sweep
    locates the unique offset with a one-dimensional nullspace whose state
    signs split 6 struts negative / 24 cables positive.
    """
    def build(h):
        pts = {
            "A": (-1, -h, 0), "B": (1, -h, 0), "C": (-1, h, 0), "D": (1, h, 0),
            "E": (0, -1, -h), "F": (0, 1, -h), "G": (0, -1, h), "H": (0, 1, h),
            "I": (-h, 0, -1), "J": (-h, 0, 1), "K": (h, 0, -1), "L": (h, 0, 1),
        }
        struts = [("A", "B"), ("C", "D"), ("E", "F"), ("G", "H"),
                  ("I", "J"), ("K", "L")]
        cables = [("A", "E"), ("A", "G"), ("A", "I"), ("A", "J"),
                  ("B", "E"), ("B", "G"), ("B", "K"), ("B", "L"),
                  ("C", "F"), ("C", "H"), ("C", "I"), ("C", "J"),
                  ("D", "F"), ("D", "H"), ("D", "K"), ("D", "L"),
                  ("E", "I"), ("E", "K"), ("F", "I"), ("F", "K"),
                  ("G", "J"), ("G", "L"), ("H", "J"), ("H", "L")]
        return make_state(pts, struts + cables), struts, cables

    hits = []
    for k in range(30, 71):
        h = k / 100.0
        state, struts, cables = build(h)
        null = nullspace_basis(assemble_equilibrium_matrix(state), 1e-8)
        if null.shape[1] != 1:
            continue
        vec = dict(zip(state.members, null[:, 0]))
        s_signs = {np.sign(vec[tuple(sorted(s))]) for s in struts}
        c_signs = {np.sign(vec[tuple(sorted(c))]) for c in cables}
        if len(s_signs) == 1 and len(c_signs) == 1 and s_signs != c_signs:
            hits.append(h)
    return hits


def test_criterion_4_icosahedron():
    hits = icosahedron_offset_sweep()
    assert hits == [0.5]
    steps = fileio.load_script(fileio.fixture_path("icosahedron.script"))
    n_cells = sum(1 for s in steps if type(s).__name__ in ("SeedStep", "AdhereStep"))
    n_adhesions = sum(1 for s in steps if type(s).__name__ == "AdhereStep")
    n_fusions = sum(1 for s in steps if type(s).__name__ == "FuseStep")
    assert (n_cells, n_adhesions, n_fusions) == (16, 15, 9)
    result = run_script(steps)
    state = result.state
    assert len(state.nodes) == 12
    assert len(state.members) == 30
    assert state.dim_w == 1
    vec = dict(zip(state.members, state.basis[:, 0]))
    scale = vec[("A", "E")]
    struts = [m for m in state.members if abs(vec[m] / scale + 1.5) <= 1e-6]
    cables = [m for m in state.members if abs(vec[m] / scale - 1.0) <= 1e-6]
    assert len(struts) == 6 and len(cables) == 24
    rep = count_report(state)
    assert rep.mechanisms == 1
    assert rep.maxwell_consistent
    report(4, "16 cells / 15 adhesions / 9 fusions give 12 nodes, 30 members, "
              "one state at -1.5 / +1.0, one mechanism")


def _pick_shared(rng, state, n_shared):
    """Shared node set with at most one missing pairwise member.

    Adhesion attaches a cell along the boundary of existing cells, so the
    shared nodes are mutually connected except for at most one pair (the
    pair a virtual cell then accounts for).
    """
    members = set(state.members)
    adj = {n: set() for n in state.node_ids}
    for a, b in members:
        adj[a].add(b)
        adj[b].add(a)
    ids = list(state.node_ids)
    for _ in range(60):
        a = str(rng.choice(ids))
        if not adj[a]:
            continue
        chosen = [a, str(rng.choice(sorted(adj[a])))]
        while len(chosen) < n_shared:
            full = [n for n in ids if n not in chosen
                    and all(n in adj[c] for c in chosen)]
            near = [n for n in ids if n not in chosen
                    and sum(1 for c in chosen if n not in adj[c]) == 1]
            pool = full if full else near
            if not pool:
                break
            chosen.append(str(rng.choice(sorted(pool))))
        if len(chosen) != n_shared:
            continue
        missing = sum(1 for p in itertools.combinations(chosen, 2)
                      if tuple(sorted(p)) not in members)
        if missing <= 1:
            return chosen
    return None


def _random_sequence(rng, n_cells):
    """One randomized adhesion/fusion build; yields per-step oracle checks."""
    pts = random_gp_points(rng, 5)
    names = [f"n{k}" for k in range(100)]
    spec = CellSpec(nodes=tuple(names[:5]), coords=tuple(pts),
                    anchor=(names[0], names[1]))
    state, morpho, _ = seed(spec)
    fresh = iter(names[5:])
    steps = []
    cells = 1
    while cells < n_cells:
        if state.dim_w >= 2 and rng.random() < 0.3:
            # single-member fusion of a stressed member
            norms = np.linalg.norm(state.basis, axis=0)
            rel = np.abs(state.basis) / norms
            stressed = [m for k, m in enumerate(state.members)
                        if rel[k].max() > 1e-6]
            member = stressed[int(rng.integers(len(stressed)))]
            before = state.dim_w
            state, morpho, log = fuse(state, morpho, [member])
            steps.append(("fuse", log, before, state))
            continue
        n_shared = int(rng.integers(3, 5))
        shared = _pick_shared(rng, state, n_shared)
        if shared is None:
            continue
        for _ in range(80):
            new_names = [next(fresh) for _ in range(5 - n_shared)]
            new_pts = rng.normal(size=(len(new_names), 3)) * 1.5
            coords = [state.coord_of(s) for s in shared] + list(new_pts)
            if general_position(coords).ok:
                break
        else:
            continue
        nodes = tuple(shared + new_names)
        spec = CellSpec(nodes=nodes, coords=tuple(coords),
                        anchor=(nodes[0], nodes[1]))
        before = state.dim_w
        state, morpho, log = adhere(state, morpho, spec, shared=tuple(shared))
        steps.append(("adhere", log, before, state))
        cells += 1
    return steps


def test_criterion_5_randomized_counting_rule_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    n_sequences = 200
    n_steps = 0
    for _ in range(n_sequences):
        n_cells = int(rng.integers(5, 13))
        for kind, log, before, state in _random_sequence(rng, n_cells):
            null = nullspace_basis(assemble_equilibrium_matrix(state), 1e-9)
            assert null.shape[1] == state.dim_w            # engine rank == oracle
            observed = state.dim_w - before
            assert observed == log.observed_delta
            assert log.corollary_delta == observed          # counting rule
            A = assemble_equilibrium_matrix(state)
            scale = state.diameter()
            for k in range(state.dim_w):
                w = state.basis[:, k]
                assert (np.linalg.norm(A @ w)
                        <= 1e-9 * np.linalg.norm(w) * scale)
            n_steps += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report(5, f"{n_sequences} random sequences, {n_steps} steps, all "
              f"counting-rule consistent, {elapsed:.1f} s")


def test_criterion_6_closed_form_vs_nullspace():
    rng = np.random.default_rng(11)
    worst = 1.0
    for _ in range(100):
        pts = random_gp_points(rng, 5)
        spec = CellSpec(nodes=("a", "b", "c", "d", "e"), coords=tuple(pts),
                        anchor=("a", "b"))
        stress = cell_self_stress(spec)
        state = make_state({n: spec.coord_of(n) for n in spec.nodes},
                           spec.members())
        null = nullspace_basis(assemble_equilibrium_matrix(state), 1e-9)
        assert null.shape[1] == 1
        v = stress.vector(state.members)
        cos = abs(np.dot(v, null[:, 0])) / np.linalg.norm(v)
        worst = min(worst, cos)
        assert cos >= 1 - 1e-9
    report(6, f"100 random cells, worst closed-form/nullspace cosine "
              f"= {worst:.12f}")


def _cancel_measure(host_stress, cell_stress, removed):
    """Relative residual on removed members after opposing the host stress."""
    biggest = max(abs(v) for v in host_stress.values())
    worst = 0.0
    for m in removed:
        worst = max(worst, abs(host_stress[m] + cell_stress[m]) / biggest)
    return worst


def test_criterion_7_placement_round_trips():
    rng = np.random.default_rng(23)
    worst = {"plane": 0.0, "bilinear": 0.0, "quadric": 0.0}
    done = {"plane": 0, "bilinear": 0, "quadric": 0}
    guard = 0
    while min(done.values()) < 100 and guard < 3000:
        guard += 1
        kind = min(done, key=lambda k: done[k])
        pts = random_gp_points(rng, 5)
        host = CellSpec(nodes=("a", "b", "c", "d", "x"), coords=tuple(pts),
                        anchor=("a", "b"))
        hstress = cell_self_stress(host)
        box_lo, box_hi = pts.min(0) - 1.5, pts.max(0) + 1.5
        if kind == "quadric":
            removed = [("a", "b"), ("c", "d")]
            w1, w2 = -hstress[removed[0]], -hstress[removed[1]]
            con = quadric_nonadjacent_shared4(pts[0], pts[1], pts[2], pts[3],
                                              -w1, -w2)
            base = pts[:4]
        elif kind == "plane":
            removed = [("a", "b"), ("b", "c")]
            w1, w2 = -hstress[removed[0]], -hstress[removed[1]]
            con = plane_adjacent_shared4(pts[0], pts[1], pts[2], pts[3],
                                         -w1, -w2)
            base = pts[:4]
        else:  # bilinear: fix a fresh fourth node on the contracted plane
            removed = [("a", "b"), ("b", "c")]
            w1, w2 = -hstress[removed[0]], -hstress[removed[1]]
            M = constraint_adjacent_shared3(pts[0], pts[1], pts[2], -w1, -w2)
            dpos = rng.normal(size=3) * 1.5
            try:
                con = M.contract(dpos)
            except Exception:
                continue
            base = np.vstack([pts[:3], dpos])
        samples = sample_surface(con, 10, (box_lo, box_hi), seed=guard)
        e = next((s for s in samples
                  if general_position(np.vstack([base, s])).ok), None)
        if e is None:
            continue
        cell = CellSpec(nodes=("a", "b", "c", "d", "e"),
                        coords=tuple(np.vstack([base, e])),
                        anchor=("a", "b"),
                        anchor_value=-hstress[("a", "b")])
        cstress = cell_self_stress(cell)
        resid = _cancel_measure(hstress.entries, cstress.entries, removed)
        assert resid <= 1e-8, (kind, resid)
        worst[kind] = max(worst[kind], resid)
        done[kind] += 1
    assert min(done.values()) >= 100
    report(7, "100 round trips per constraint type, worst residuals "
              + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_8_maxwell_identity_everywhere():
    rng = np.random.default_rng(31)
    checked = 0
    for name in ("triplex.script", "icosahedron.script", "cellchain.script"):
        result = run_script(fileio.load_script(fileio.fixture_path(name)))
        rep = count_report(result.state)
        assert rep.maxwell_consistent
        checked += 1
    for _ in range(20):
        n_cells = int(rng.integers(5, 10))
        for _, _, _, state in _random_sequence(rng, n_cells):
            rep = count_report(state)
            assert rep.maxwell_consistent
            checked += 1
    # closed-form sanity numbers used in the docs (high-res mesh build)
    assert 548 == 2126 - 3 * 528 + 6
    report(8, f"identity holds on {checked} structures plus the documented "
              f"closed-form example")


def test_criterion_9_cli_and_service_contract(tmp_path):
    # run on every shipped fixture exits 0
    outs = {}
    for name in ("triplex.script", "icosahedron.script", "cellchain.script"):
        out = tmp_path / f"{name}.tstruct"
        assert cli_main(["run", str(fileio.fixture_path(name)),
                         "-o", str(out)]) == 0
        outs[name] = out
    # check fails on a corrupted structure
    text = outs["triplex.script"].read_text()
    corrupted = re.sub(r"(stress \S+ )(\S+)",
                       lambda m: m.group(1) + str(float(m.group(2)) + 0.5),
                       text, count=1)
    bad = tmp_path / "bad.tstruct"
    bad.write_text(corrupted)
    assert cli_main(["check", str(bad)]) == 1
    assert cli_main(["check", str(outs["icosahedron.script"])]) == 0

    # service: preview purity and undo byte-identity
    import threading

    import requests

    from tensecell.service import make_server
    server = make_server(port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        base = f"http://127.0.0.1:{server.server_address[1]}"
        sid = requests.post(f"{base}/sessions", json={
            "script": fileio.fixture_path("cellchain.script").read_text(),
        }).json()["id"]
        before_state = requests.get(f"{base}/sessions/{sid}/state").json()
        before_bytes = requests.get(f"{base}/sessions/{sid}/export",
                                    params={"format": "structure"}).text
        r = requests.post(f"{base}/sessions/{sid}/preview", json={
            "kind": "fuse", "members": [["1", "3"]]})
        assert r.status_code == 200
        assert requests.get(f"{base}/sessions/{sid}/state").json() == before_state
        r = requests.post(f"{base}/sessions/{sid}/fuse",
                          json={"members": [["1", "3"]]})
        assert r.status_code == 200
        assert requests.post(f"{base}/sessions/{sid}/undo", json={}).status_code == 200
        after_bytes = requests.get(f"{base}/sessions/{sid}/export",
                                   params={"format": "structure"}).text
        assert after_bytes == before_bytes
    finally:
        server.shutdown()
        server.server_close()
    report(9, "fixture runs exit 0, corrupted check exits 1, preview is pure, "
              "undo restores byte-identical state")
