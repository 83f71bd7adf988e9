"""Objectives, simulated experts, arrivals, and fingerprint ingestion."""

import numpy as np
import pytest

from steerbo.gp import tanimoto_gram
from steerbo.testbed import (
    expert_label,
    feedback_arrives,
    load_fingerprints,
    make_expert,
    make_problem,
)

# Derived by 200-restart L-BFGS over the unit box before this test was frozen.
HARTMANN6_MAX = 3.322368011415487


def test_ackley_optimum_at_origin():
    p = make_problem("ackley10")
    assert abs(p.evaluate(np.zeros(10))) < 1e-12
    assert np.array_equal(p.known_optimizer, np.zeros(10))


def test_levy_optimum_at_ones():
    p = make_problem("levy10")
    assert abs(p.evaluate(np.ones(10))) < 1e-12


def test_rastrigin_optimum_at_origin():
    p = make_problem("rastrigin10")
    assert abs(p.evaluate(np.zeros(10))) < 1e-12


def test_hartmann_optimum_matches_fixture():
    p = make_problem("hartmann6")
    assert p.evaluate(p.known_optimizer) == pytest.approx(HARTMANN6_MAX, abs=1e-9)
    assert p.known_optimum_value == pytest.approx(HARTMANN6_MAX, abs=1e-9)


@pytest.mark.parametrize("name", ["ackley10", "levy10", "rastrigin10", "hartmann6"])
def test_known_optimizer_beats_random_samples(name):
    p = make_problem(name)
    rng = np.random.default_rng(7)
    best_known = p.evaluate(p.known_optimizer)
    samples = rng.uniform(p.lb, p.ub, size=(10_000, p.d))
    assert all(p.evaluate(x) <= best_known + 1e-9 for x in samples)


def test_unknown_problem():
    with pytest.raises(ValueError, match="unknown problem"):
        make_problem("sphere3")


def test_hint_expert_scores():
    p = make_problem("ackley10")
    expert = make_expert("hint", p)
    assert expert.score(p.known_optimizer) == 0.0
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.uniform(p.lb, p.ub, 10)
        assert expert.score(x) < 0.0


def test_hint_requires_known_optimizer():
    from dataclasses import replace

    p = replace(make_problem("ackley10"), known_optimizer=None)
    with pytest.raises(ValueError, match="known optimizer"):
        make_expert("hint", p)


def test_constraint_expert_default_targets():
    ackley = make_problem("ackley10")
    expert = make_expert("constraint", ackley)  # paper target c = 100
    x = np.zeros(10)
    x[0] = 100.0
    assert expert.score(x) == 0.0

    levy = make_problem("levy10")
    expert22 = make_expert("constraint", levy)  # c = 22
    x = np.zeros(10)
    x[0] = 32.0
    assert expert22.score(x) == pytest.approx(-100.0)


def test_constraint_requires_c_for_other_problems():
    with pytest.raises(ValueError, match="explicit c"):
        make_expert("constraint", make_problem("rastrigin10"))
    expert = make_expert("constraint", make_problem("rastrigin10"), c=3.0)
    x = np.zeros(10)
    x[0] = 3.0
    assert expert.score(x) == 0.0


def test_expert_label_rule():
    p = make_problem("ackley10")
    expert = make_expert("hint", p)
    x_far = np.full(10, 5.0)
    assert expert_label(expert, p.known_optimizer, x_far) == 0
    assert expert_label(expert, x_far, p.known_optimizer) == 1


def test_expert_label_tie_goes_to_one():
    p = make_problem("ackley10")
    expert = make_expert("hint", p)
    a = np.zeros(10)
    a[0] = 2.0
    b = np.zeros(10)
    b[0] = -2.0  # same distance to the origin
    assert expert_label(expert, a, b) == 1


def test_constraint_label_prefers_on_shell():
    expert = make_expert("constraint", make_problem("ackley10"), c=100.0)
    on_shell = np.zeros(10)
    on_shell[0] = 100.0
    assert expert_label(expert, on_shell, np.zeros(10)) == 0


def test_label_antisymmetry_on_strict_pairs():
    p = make_problem("levy10")
    expert = make_expert("hint", p)
    rng = np.random.default_rng(3)
    for _ in range(200):
        x0, x1 = rng.uniform(p.lb, p.ub, size=(2, 10))
        if expert.score(x0) == expert.score(x1):
            continue
        assert expert_label(expert, x0, x1) == 1 - expert_label(expert, x1, x0)


def test_hint_label_is_distance_comparison():
    p = make_problem("ackley10")
    expert = make_expert("hint", p)
    rng = np.random.default_rng(4)
    x_star = p.known_optimizer
    for _ in range(200):
        x0, x1 = rng.uniform(p.lb, p.ub, size=(2, 10))
        closer = np.linalg.norm(x0 - x_star) < np.linalg.norm(x1 - x_star)
        assert (expert_label(expert, x0, x1) == 0) == closer


def test_feedback_arrival_edge_probabilities():
    rng = np.random.default_rng(0)
    assert not any(feedback_arrives(rng, 0.0) for _ in range(1000))
    assert all(feedback_arrives(rng, 1.0) for _ in range(1000))


def test_feedback_arrival_rate():
    rng = np.random.default_rng(1)
    hits = sum(feedback_arrives(rng, 0.25) for _ in range(100_000))
    assert hits / 100_000 == pytest.approx(0.25, abs=0.01)


def test_feedback_arrival_rejects_bad_probability():
    with pytest.raises(ValueError, match="p_fb"):
        feedback_arrives(np.random.default_rng(0), 1.2)


# -- fingerprint ingestion -------------------------------------------------


def _write(tmp_path, text):
    path = tmp_path / "fp.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_load_well_formed(tmp_path):
    path = _write(
        tmp_path,
        "id,bit_0,bit_1,bit_2,value\nmol1,1,0,1,-3.5\nmol2,0,1,0,-1.0\nmol3,1,1,1,2.0\n",
    )
    fps = load_fingerprints(path)
    assert len(fps) == 3
    assert fps.bits == 3
    assert fps.identifiers == ("mol1", "mol2", "mol3")
    assert fps.values.tolist() == [-3.5, -1.0, 2.0]


def test_load_without_values(tmp_path):
    path = _write(tmp_path, "id,bit_0,bit_1\na,1,0\nb,0,1\n")
    fps = load_fingerprints(path)
    assert fps.values is None


def test_nonbinary_entry_names_row(tmp_path):
    path = _write(tmp_path, "id,bit_0,bit_1\na,1,0\nb,2,1\n")
    with pytest.raises(ValueError, match="row 3"):
        load_fingerprints(path)


def test_ragged_row_rejected(tmp_path):
    path = _write(tmp_path, "id,bit_0,bit_1\na,1,0\nb,1\n")
    with pytest.raises(ValueError, match="row 3"):
        load_fingerprints(path)


def test_missing_identifier_rejected(tmp_path):
    path = _write(tmp_path, "id,bit_0,bit_1\n,1,0\n")
    with pytest.raises(ValueError, match="identifier"):
        load_fingerprints(path)


def test_synthetic_fingerprints_tanimoto_gram_psd(tmp_path):
    rng = np.random.default_rng(5)
    rows = ["id," + ",".join(f"bit_{i}" for i in range(256))]
    bits = rng.integers(0, 2, size=(500, 256))
    for i, row in enumerate(bits):
        rows.append(f"m{i}," + ",".join(map(str, row)))
    path = _write(tmp_path, "\n".join(rows) + "\n")
    fps = load_fingerprints(path)
    assert len(fps) == 500
    gram = tanimoto_gram(fps.vectors, fps.vectors)
    eigvals = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    assert eigvals.min() >= -1e-8
