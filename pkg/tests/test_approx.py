import numpy as np
import pytest

from otrepair.approx import (
    build,
    decompose_solve,
    estimate_conditionals,
    lower_bound,
    sample_y,
    transform,
    transform_grid,
)
from otrepair.barycenter import barycenter_fixed_support
from otrepair.errors import (
    IndexOutOfRangeError,
    MissingUError,
    UnknownGroupError,
    UnseenValueError,
    UOutOfRangeError,
)
from otrepair.measure import (
    Dataset,
    coalesce,
    dataset_from_rows,
    dirac,
    family,
    make_measure,
    mean,
    mixture,
)

from conftest import random_dataset, random_family


# --- estimate_conditionals ----------------------------------------------------

def test_estimate_single_group():
    d = dataset_from_rows([("g1", 0.0, 1.0), ("g1", 2.0, 1.0)])
    fam = estimate_conditionals(d)
    assert fam.labels == ("g1",)
    assert fam.atoms[0].p == 1.0
    assert fam.atoms[0].law.support.ravel().tolist() == [0.0, 2.0]
    assert np.allclose(fam.atoms[0].law.weights, [0.5, 0.5])


def test_estimate_two_singleton_groups():
    d = dataset_from_rows([("g1", 0.0, 1.0), ("g2", 1.0, 3.0)])
    fam = estimate_conditionals(d)
    assert fam.labels == ("g1", "g2")
    assert np.allclose(fam.probabilities, [0.25, 0.75])
    assert fam.atom("g1").law.equals(dirac([0.0]))


def test_estimate_mixture_reproduces_marginal(rng):
    for _ in range(15):
        d = random_dataset(rng, m=2)
        fam = estimate_conditionals(d)
        mix = coalesce(mixture(fam))
        marginal = coalesce(make_measure(d.x, d.weights))
        assert np.array_equal(mix.support, marginal.support)
        assert np.allclose(mix.weights, marginal.weights, atol=1e-14)


def test_estimate_preserves_row_order_with_duplicates():
    d = dataset_from_rows(
        [("a", 1.0, 1.0), ("a", 1.0, 2.0), ("a", 0.0, 1.0)]
    )
    law = estimate_conditionals(d).atoms[0].law
    assert law.support.ravel().tolist() == [1.0, 1.0, 0.0]
    assert np.allclose(law.weights, [0.25, 0.5, 0.25])


# --- lower_bound ---------------------------------------------------------------

def test_lower_bound_zero_for_common_law():
    mu = make_measure([0.0, 1.0], [1.0, 1.0])
    fam = family([("a", 0.5, mu), ("b", 0.5, mu)])
    assert lower_bound(fam, mixture(fam)) <= 1e-12


def test_lower_bound_two_diracs():
    fam = family([("a", 0.5, dirac([0.0])), ("b", 0.5, dirac([2.0]))])
    assert lower_bound(fam, dirac([1.0])) == 1.0


def test_lower_bound_monte_carlo_product_coupling(rng):
    # any independent pairing of x and y must do at least this badly
    fam = random_family(rng, n_atoms=3, max_pts=4, m=1)
    nu = make_measure(rng.normal(size=5), rng.random(5) + 0.1)
    bound = lower_bound(fam, nu)
    n = 10_000
    labels = rng.choice(len(fam), size=n, p=fam.probabilities)
    xs = np.empty(n)
    for i, a_idx in enumerate(labels):
        law = fam.atoms[a_idx].law
        xs[i] = law.support[rng.choice(law.n, p=law.weights), 0]
    ys = nu.support[rng.choice(nu.n, size=n, p=nu.weights), 0]
    emp = float(np.mean((xs - ys) ** 2))
    assert emp >= bound - 2e-2


# --- build -----------------------------------------------------------------------

def test_build_independent_x_gives_zero_distance():
    rows = [("a", 0.0, 1.0), ("a", 2.0, 1.0), ("b", 0.0, 2.0), ("b", 2.0, 2.0)]
    ap = build(dataset_from_rows(rows))
    assert ap.achieved_distance_sq <= 1e-12
    assert coalesce(ap.nu0).equals(
        coalesce(make_measure([0.0, 2.0], [1.0, 1.0]))
    )


def test_build_measurable_case_collapses_to_mean():
    rows = [("a", 0.0, 1.0), ("b", 2.0, 1.0), ("c", 7.0, 2.0)]
    d = dataset_from_rows(rows)
    ap = build(d)
    ex = d.mean_x()
    assert ap.method == "dirac_closed_form"
    assert ap.nu0.n == 1 and np.allclose(ap.nu0.support[0], ex)
    expected = sum(
        w * (x - ex[0]) ** 2 for x, w in zip([0.0, 2.0, 7.0], [0.25, 0.25, 0.5])
    )
    assert abs(ap.achieved_distance_sq - expected) <= 1e-12


def test_build_hand_instance_quantile_average():
    d = dataset_from_rows(
        [("g1", 0.0, 1.0), ("g1", 2.0, 1.0), ("g2", 1.0, 1.0), ("g2", 3.0, 1.0)]
    )
    ap = build(d)
    assert ap.nu0.support.ravel().tolist() == [0.5, 2.5]
    assert np.allclose(ap.nu0.weights, [0.5, 0.5])
    assert abs(ap.achieved_distance_sq - 0.25) <= 1e-12
    # cross-check against the fixed-support LP on the quantile image
    lp = barycenter_fixed_support(ap.family, ap.nu0.support)
    assert abs(lp.objective - 0.25) <= 1e-10


def test_build_bound_attained_and_means_match(rng):
    for m in (1, 2):
        for _ in range(6):
            d = random_dataset(rng, m=m)
            ap = build(d)
            assert (
                abs(ap.achieved_distance_sq - ap.lower_bound)
                <= 1e-8 * max(1.0, ap.lower_bound)
            )
            assert np.max(np.abs(ap.mean_y - ap.mean_x)) <= 1e-8
            for a in ap.family.atoms:
                dis = ap.disintegrations[a.label]
                recon = a.law.weights @ dis.conditional
                assert np.max(np.abs(recon - ap.nu0.weights)) <= 1e-8


def test_build_exact_lp_recentring_identity(rng):
    # for the LP route the achieved value must equal the LP optimum minus
    # the squared recentring shift
    for _ in range(4):
        d = random_dataset(rng, m=2)
        ap = build(d)
        fam = ap.family
        sup_mean = ap.lp_objective - ap.achieved_distance_sq
        from otrepair.barycenter import default_support, fixed_support_weights
        raw, _, lp = fixed_support_weights(fam, default_support(fam))
        shift = ap.mean_x - mean(raw)
        assert abs(lp - ap.lp_objective) <= 1e-12 * max(1.0, abs(lp))
        assert abs(sup_mean - float(shift @ shift)) <= 1e-9


def test_build_perturbation_optimality_1d(rng):
    # exact quantile builds are unrestricted optima: perturbing two nu0
    # weights can only increase the objective
    for _ in range(3):
        d = random_dataset(rng, m=1)
        ap = build(d)
        if ap.nu0.n < 2:
            continue
        base = lower_bound(ap.family, ap.nu0)
        for _ in range(5):
            i, j = rng.choice(ap.nu0.n, size=2, replace=False)
            w = ap.nu0.weights.copy()
            delta = min(1e-3, w[i])
            w[i] -= delta
            w[j] += delta
            cand = make_measure(ap.nu0.support, w)
            assert lower_bound(ap.family, cand) >= base - 1e-10


def test_build_methods_all_attain_their_bound(rng):
    d = random_dataset(rng, n_atoms=2, max_rows=4, m=2)
    for method, kw in [
        ("exact", {}),
        ("entropic", {"epsilon": 0.05, "max_iter": 300}),
        ("free", {"k": 3}),
    ]:
        ap = build(d, method=method, **kw)
        assert (
            abs(ap.achieved_distance_sq - ap.lower_bound)
            <= 1e-8 * max(1.0, ap.lower_bound)
        )
        assert np.max(np.abs(ap.mean_y - ap.mean_x)) <= 1e-8


# --- sample_y ---------------------------------------------------------------------

def _toy_approx():
    d = dataset_from_rows(
        [("g1", 0.0, 1.0), ("g1", 2.0, 1.0), ("g2", 1.0, 1.0), ("g2", 3.0, 1.0)]
    )
    return build(d)


def test_sample_y_dirac_row_constant():
    d = dataset_from_rows([("a", 0.0, 1.0), ("b", 2.0, 1.0)])
    ap = build(d)
    for u in (0.0, 0.3, 1.0):
        assert sample_y(ap, "a", 0, u).tolist() == ap.nu0.support[0].tolist()


def test_sample_y_inverse_cdf_thresholds():
    # hand-built ladder {y1: 0.25, y2: 0.75}: u=0.1 -> y1, u=0.5 -> y2,
    # u=1.0 -> y2, and u exactly at the breakpoint returns the earlier point
    from otrepair.approx import Disintegration, IndependentApproximation
    from otrepair.measure import family as make_family

    nu0 = make_measure([10.0, 20.0], [0.25, 0.75])
    law = dirac([0.0])
    dis = Disintegration(
        "g", law,
        conditional=np.array([[0.25, 0.75]]),
        ladder=np.array([[0.25, 1.0]]),
    )
    ap = IndependentApproximation(
        family=make_family([("g", 1.0, law)]),
        nu0=nu0,
        disintegrations={"g": dis},
        ladder_order=np.array([0, 1]),
        achieved_distance_sq=0.0,
        lower_bound=0.0,
        mean_x=np.array([0.0]),
        mean_y=np.array([17.5]),
        method="hand",
    )
    assert sample_y(ap, "g", 0, 0.1).tolist() == [10.0]
    assert sample_y(ap, "g", 0, 0.25).tolist() == [10.0]
    assert sample_y(ap, "g", 0, 0.5).tolist() == [20.0]
    assert sample_y(ap, "g", 0, 1.0).tolist() == [20.0]


def test_sample_y_grid_law_matches_conditional(rng):
    ap = _toy_approx()
    R = 10_000
    grid = (np.arange(R) + 0.5) / R
    for label in ("g1", "g2"):
        dis = ap.disintegrations[label]
        for i in range(dis.law.n):
            emp = np.zeros(ap.nu0.n)
            cum = dis.ladder[i]
            pos = np.minimum(np.searchsorted(cum, grid, side="left"), len(cum) - 1)
            np.add.at(emp, ap.ladder_order[pos], 1.0 / R)
            tv = 0.5 * np.abs(
                emp - dis.conditional[i][np.argsort(np.arange(ap.nu0.n))]
            ).sum()
            assert tv <= 1e-4


def test_sample_y_errors():
    ap = _toy_approx()
    with pytest.raises(UnknownGroupError):
        sample_y(ap, "nope", 0, 0.5)
    with pytest.raises(IndexOutOfRangeError):
        sample_y(ap, "g1", 2, 0.5)
    with pytest.raises(UOutOfRangeError):
        sample_y(ap, "g1", 0, 1.5)


# --- transform ----------------------------------------------------------------------

def test_transform_identity_case_preserves_law(rng):
    rows = [("a", 0.0, 1.0), ("a", 2.0, 1.0), ("b", 0.0, 2.0), ("b", 2.0, 2.0)]
    d = dataset_from_rows(rows)
    ap = build(d)
    out = transform_grid(ap, d, 200)
    law_x = coalesce(make_measure(out.x, out.weights))
    law_y = coalesce(make_measure(out.y, out.weights))
    assert np.array_equal(law_x.support, law_y.support)
    assert np.max(np.abs(law_x.weights - law_y.weights)) <= 1e-9


def test_transform_measurable_case_constant():
    d = dataset_from_rows([("a", 0.0, 1.0), ("b", 2.0, 1.0)])
    ap = build(d)
    out = transform(ap, d, seed=3)
    assert np.all(out.y == 1.0)


def test_transform_hand_instance_grid_distance():
    d = dataset_from_rows(
        [("g1", 0.0, 1.0), ("g1", 2.0, 1.0), ("g2", 1.0, 1.0), ("g2", 3.0, 1.0)]
    )
    ap = build(d)
    out = transform_grid(ap, d, 1000)
    dist = float(out.weights @ ((out.x - out.y) ** 2).sum(axis=1))
    assert abs(dist - 0.25) <= 1e-3


def test_transform_errors():
    ap = _toy_approx()
    with pytest.raises(UnknownGroupError):
        transform(ap, dataset_from_rows([("zz", 0.0, 1.0)]), seed=0)
    with pytest.raises(UnseenValueError):
        transform(ap, dataset_from_rows(
            [("g1", 5.0, 1.0), ("g1", 2.0, 1.0),
             ("g2", 1.0, 1.0), ("g2", 3.0, 1.0)]
        ), seed=0)
    d = dataset_from_rows(
        [("g1", 0.0, 1.0), ("g1", 2.0, 1.0), ("g2", 1.0, 1.0), ("g2", 3.0, 1.0)]
    )
    with pytest.raises(MissingUError):
        transform(ap, d)


def test_transform_deterministic_under_seed():
    ap = _toy_approx()
    d = dataset_from_rows(
        [("g1", 0.0, 1.0), ("g1", 2.0, 1.0), ("g2", 1.0, 1.0), ("g2", 3.0, 1.0)]
    )
    a = transform(ap, d, seed=99)
    b = transform(ap, d, seed=99)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.u, b.u)


# --- decompose_solve -----------------------------------------------------------------

def test_decompose_measurable_case():
    d = dataset_from_rows([("a", 0.0, 1.0), ("b", 2.0, 1.0)])
    dec = decompose_solve(d)
    assert np.allclose(dec.nu0.support[0], [1.0])
    assert abs(dec.achieved_distance_sq - 1.0) <= 1e-12
    assert abs(dec.decomposition["centered_achieved"]) <= 1e-15
    assert abs(dec.decomposition["between_variance"] - 1.0) <= 1e-12


def test_decompose_independent_case_reduces_to_build():
    rows = [("a", 0.0, 1.0), ("a", 2.0, 1.0), ("b", 0.0, 2.0), ("b", 2.0, 2.0)]
    d = dataset_from_rows(rows)
    ap, dec = build(d), decompose_solve(d)
    assert abs(ap.achieved_distance_sq - dec.achieved_distance_sq) <= 1e-12
    assert dec.decomposition["between_variance"] <= 1e-15


def test_decompose_matches_build(rng):
    for m in (1, 2):
        for _ in range(5):
            d = random_dataset(rng, m=m)
            ap, dec = build(d), decompose_solve(d)
            assert abs(ap.achieved_distance_sq - dec.achieved_distance_sq) <= 1e-8
            # orthogonal split holds exactly
            assert abs(
                dec.achieved_distance_sq
                - dec.decomposition["centered_achieved"]
                - dec.decomposition["between_variance"]
            ) <= 1e-10 * max(1.0, dec.achieved_distance_sq)
            assert np.max(np.abs(dec.mean_y - dec.mean_x)) <= 1e-8


def test_decompose_transform_consistent(rng):
    d = random_dataset(rng, n_atoms=3, max_rows=4, m=1, with_u=True)
    dec = decompose_solve(d)
    out = transform(dec, d)
    assert out.y.shape == d.x.shape
    assert all(
        any(np.array_equal(y, s) for s in dec.nu0.support) for y in out.y
    )
