"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Tolerances are pinned here; every threshold below is the one the criterion
states, with standard errors computed as documented next to each test.
"""

import math
import time
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from conflink import bounds, conformal, graph, harness, scoring

from acceptance_log import record
from oracles import brute_force_bh, central_difference, naive_pvalues, relabeled_train_view

# the reference setting shared by criteria 1, 2, 5 and 8
BASE = dict(
    graph=harness.GraphConfig(n=100, block_count=2, within_prob=0.5, between_prob=0.05),
    sampling=harness.SamplingConfig(w0=0.8, w1=0.8),
    scorer=scoring.ScorerSpec(kind="common_neighbors"),
    delta=0.1,
    lambda_method="closed_form",
)
REPLICATIONS = 500
NULL_REPLICATIONS = 1000
LAMBDA_100_100_005 = 0.2978125511045142336


def base_config(**kw):
    return harness.ExperimentConfig(**{**BASE, "replications": REPLICATIONS, **kw})


@pytest.fixture(scope="session")
def experiments():
    """Lazily run and cache full experiments keyed by (alpha, bound form)."""
    cache = {}

    def get(alpha, form="paper"):
        if (alpha, form) not in cache:
            cache[alpha, form] = harness.run_experiment(
                base_config(alpha=alpha, bound_form=form, root_seed=2024))
        return cache[alpha, form]

    return get


@pytest.fixture(scope="session")
def null_outcomes():
    cfg = base_config(alpha=0.1, replications=NULL_REPLICATIONS, root_seed=77)
    return [harness.simulate_replication(cfg, r) for r in range(NULL_REPLICATIONS)]


# ------------------------------------------------------------------ 1

@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.1, 0.2])
def test_criterion_1_fdr_control(experiments, alpha):
    rep = experiments(alpha)
    limit = alpha + 3 * rep.fdr_se
    ok = rep.fdr_hat <= limit
    record(f"1{'ab'[[0.1, 0.2].index(alpha)]}", f"FDR control, alpha={alpha}", ok,
           f"fdr_hat={rep.fdr_hat:.4f} se={rep.fdr_se:.4f} limit={limit:.4f} "
           f"tdr_hat={rep.tdr_hat:.4f} used={rep.used} skipped={rep.skipped}")
    assert ok


@pytest.mark.slow
def test_criterion_1_supplement_high_signal():
    # in the reference setting BH almost never rejects, so also check a
    # setting where it makes many discoveries
    cfg = harness.ExperimentConfig(
        graph=harness.GraphConfig(n=100, within_prob=0.9, between_prob=0.02),
        scorer=scoring.ScorerSpec(kind="common_neighbors"),
        alpha=0.2, replications=REPLICATIONS, root_seed=2025)
    rep = harness.run_experiment(cfg)
    limit = 0.2 + 3 * rep.fdr_se
    ok = rep.fdr_hat <= limit and rep.tdr_hat > 0.5
    record("1c", "supplementary FDR control with power, within=0.9 between=0.02 alpha=0.2", ok,
           f"fdr_hat={rep.fdr_hat:.4f} se={rep.fdr_se:.4f} limit={limit:.4f} "
           f"tdr_hat={rep.tdr_hat:.4f} (gate also requires tdr_hat > 0.5)")
    assert ok


# ------------------------------------------------------------------ 2

@pytest.mark.slow
def test_criterion_2_uniform_bound_coverage(experiments):
    rep = experiments(0.1, "paper")
    se = rep.coverage_se
    limit = 0.9 - 3 * se
    ok = rep.coverage_hat >= limit
    others = {form: experiments(0.1, form).coverage_hat for form in ("t_scaled", "t_additive")}
    record(2, "uniform FDP bound coverage, form=paper, delta=0.1", ok,
           f"coverage_hat={rep.coverage_hat:.4f} se={se:.4f} limit={limit:.4f}; "
           f"reported only: t_scaled={others['t_scaled']:.4f} "
           f"t_additive={others['t_additive']:.4f}")
    assert ok


# ------------------------------------------------------------------ 3

def test_criterion_3_closed_form_value():
    getcontext().prec = 50
    pi = Decimal("3.14159265358979323846264338327950288419716939937510")
    k, delta = Decimal(100), Decimal("0.05")
    ref = (((1 / delta).ln() + (1 + 2 * pi.sqrt() * k).ln()) / k).sqrt()
    got = bounds.lambda_closed_form(100, 100, 0.05).value
    rel = abs(Decimal(got) - ref) / ref
    rel_frozen = abs(got - LAMBDA_100_100_005) / LAMBDA_100_100_005
    ok = rel <= Decimal("1e-12") and rel_frozen <= 1e-12
    record(3, "closed-form lambda(100, 100, 0.05)", ok,
           f"value={got!r} reference={float(ref)!r} rel_err={float(rel):.2e}")
    assert ok


# ------------------------------------------------------------------ 4

@pytest.mark.slow
def test_criterion_4_closed_form_dominance():
    rows, worst = [], -math.inf
    for m in (10, 100, 1000):
        for ell in (10, 100, 1000):
            sample = bounds.polya_mc_statistics(m, ell, 100_000, seed=1000 * m + ell)
            for delta in (0.05, 0.1):
                mc = bounds.upper_quantile(sample, 1 - delta)
                se = bounds.quantile_standard_error(sample, 1 - delta)
                cf = bounds.lambda_closed_form(m, ell, delta).value
                worst = max(worst, mc - (cf + 3 * se))
                rows.append((m, ell, delta, mc, se, cf))
    for m, ell, delta, mc, se, cf in rows:
        print(f"  m={m:4d} ell={ell:4d} delta={delta:.2f} mc={mc:.4f} se={se:.5f} cf={cf:.4f}")
    ok = worst <= 0
    tightest = max(rows, key=lambda r: r[3] / r[5])
    record(4, "closed form dominates Monte-Carlo lambda on 18 cells", ok,
           f"max(mc - cf - 3se)={worst:.4f}; largest mc/cf={tightest[3] / tightest[5]:.3f} "
           f"at m={tightest[0]} ell={tightest[1]} delta={tightest[2]}")
    assert ok


# ------------------------------------------------------------------ 5

def _ratio_se(counts, sizes):
    """Replication-clustered SE of sum(counts) / sum(sizes)."""
    r = len(sizes)
    est = counts.sum() / sizes.sum()
    resid = counts - est * sizes
    return math.sqrt(r / (r - 1) * np.sum(resid**2)) / sizes.sum()


@pytest.mark.slow
def test_criterion_5_null_super_uniformity(null_outcomes):
    grid = [Fraction(k, 100) for k in range(1, 101)]
    used = [o for o in null_outcomes if o.result is not None and o.null_mask.any()]
    sizes = np.array([o.null_mask.sum() for o in used], dtype=float)
    counts = np.zeros((len(used), len(grid)))
    for r, o in enumerate(used):
        p = o.result.pvalues
        floors = [math.floor(t * (p.ell + 1)) for t in grid]
        null_nums = np.sort(p.numerators[o.null_mask])
        counts[r] = np.searchsorted(null_nums, floors, side="right")
    est = counts.sum(axis=0) / sizes.sum()
    se = np.array([_ratio_se(counts[:, c], sizes) for c in range(len(grid))])
    t = np.array([float(v) for v in grid])
    ok = bool(np.all(est <= t + 3 * se))
    z = (est - t)[:-1] / np.maximum(se[:-1], 1e-300)
    worst = int(np.argmax(z))
    record(5, "null p-values are super-uniform on t = 0.01..1.00", ok,
           f"replications={len(used)} max (P(p<=t) - t)/se over t<1 is {z[worst]:.2f} "
           f"at t={t[worst]:.2f} (P={est[worst]:.4f} se={se[worst]:.4f})")
    assert ok


# ------------------------------------------------------------------ 6

def test_criterion_6_bh_oracle():
    rng = np.random.default_rng(6)
    families = []
    for _ in range(200):
        m = int(rng.integers(1, 51))
        ell = int(rng.integers(1, 60))
        # bias toward small numerators so that many families reject something
        nums = np.minimum(rng.geometric(0.15, size=m), ell + 1)
        alpha = float(rng.choice([0.05, 0.1, 0.2, 0.5, rng.uniform(0.01, 0.99)]))
        pairs = np.column_stack([np.zeros(m, int), np.arange(1, m + 1)])
        families.append((conformal.PValueFamily(pairs, nums, ell), alpha))

    start = time.perf_counter()
    outputs = [conformal.bh_procedure(p, alpha) for p, alpha in families]
    elapsed = time.perf_counter() - start

    mismatches = nonempty = 0
    for (p, alpha), r in zip(families, outputs):
        t, idx = brute_force_bh(p.as_fractions(), conformal.as_fraction(alpha))
        nonempty += bool(idx)
        if r.threshold != t or r.as_set() != {(0, i + 1) for i in idx}:
            mismatches += 1
    ok = mismatches == 0 and elapsed < 1.0
    record(6, "BH equals brute force on 200 families", ok,
           f"mismatches={mismatches} nonempty={nonempty} runtime={elapsed:.3f}s")
    assert ok


# ------------------------------------------------------------------ 7

def test_criterion_7_pvalue_oracle():
    rng = np.random.default_rng(7)
    n = 30
    universe = graph.pair_universe(n, directed=True)
    mismatches, sizes = 0, []
    for _ in range(100):
        ell, m = (int(v) for v in rng.integers(1, 201, size=2))
        pairs = universe[rng.choice(len(universe), ell + m, replace=False)]
        # coarse scores force many score ties, resolved by the tie-break key
        scores = rng.integers(0, 8, size=ell + m).astype(float)
        tiebreak = rng.permutation(ell + m) / (ell + m) + 0.5 / (ell + m)
        table = scoring.ScoreTable(n=n, pairs=pairs, scores=scores, tiebreak=tiebreak)
        d_cal, d_test = pairs[:ell], pairs[ell:]
        p = conformal.conformal_pvalues(table, d_cal, d_test)
        keys = list(zip(scores, tiebreak))
        if p.as_fractions() != naive_pvalues(keys[:ell], keys[ell:]):
            mismatches += 1
        sizes.append((m, ell))
    ok = mismatches == 0
    record(7, "conformal p-values equal the naive double loop on 100 tables", ok,
           f"mismatches={mismatches} max m={max(s[0] for s in sizes)} "
           f"max ell={max(s[1] for s in sizes)}")
    assert ok


# ------------------------------------------------------------------ 8

@pytest.mark.slow
def test_criterion_8_nested_and_discrete(null_outcomes):
    rng = np.random.default_rng(8)
    runs = bad_grid = bad_nest = 0
    for o in null_outcomes:
        if o.result is None:
            continue
        runs += 1
        p = o.result.pvalues
        fr = p.as_fractions()
        if not (np.all((p.numerators >= 1) & (p.numerators <= p.ell + 1))
                and all((p.ell + 1) % f.denominator == 0 for f in fr)
                and np.allclose(p.values * (p.ell + 1), p.numerators)):
            bad_grid += 1
        thresholds = np.sort(np.concatenate([rng.random(8), rng.integers(0, p.ell + 2, 4)
                                             / (p.ell + 1)]))
        codes = [set(map(tuple, conformal.rejection_path(p, t).pairs.tolist()))
                 for t in thresholds]
        if any(not codes[k] <= codes[k + 1] for k in range(len(codes) - 1)):
            bad_nest += 1
        if o.result.bh.as_set() != set(
                map(tuple, conformal.rejection_path(p, o.result.bh.threshold).pairs.tolist())):
            bad_nest += 1
    ok = bad_grid == 0 and bad_nest == 0
    record(8, "rejection sets nested, p-values on the k/(ell+1) grid", ok,
           f"runs={runs} grid_violations={bad_grid} nesting_violations={bad_nest}")
    assert ok


# ------------------------------------------------------------------ 9

def test_criterion_9_mask_blindness():
    failures, checked = [], 0
    for inst in range(20):
        rng = np.random.default_rng(900 + inst)
        n = int(rng.integers(20, 41))
        g = graph.generate_sbm(n, 2, 0.5, 0.1, 2, rng)
        obs = graph.observe(g, graph.sample_omega(g, 0.8, 0.8, rng))
        part = graph.partition_edges(obs)
        ell = conformal.calibration_size(part.k0, conformal.CalibrationRule())
        d_cal = conformal.sample_calibration(part.d0, ell, rng)
        z = scoring.apply_train_mask(obs, scoring.build_train_mask(obs.omega, d_cal))
        _, z_alt = relabeled_train_view(z, ell, rng)
        for kind in ("common_neighbors", "erm_logistic"):
            spec = scoring.ScorerSpec(kind=kind, k_hops=2, max_iterations=80)
            base = scoring.compute_scores(z, spec, np.random.default_rng(inst))
            alt = scoring.compute_scores(z_alt, spec, np.random.default_rng(inst))
            checked += 1
            same = (np.array_equal(base.pairs, alt.pairs)
                    and base.scores.tobytes() == alt.scores.tobytes()
                    and base.tiebreak.tobytes() == alt.tiebreak.tobytes())
            if not same:
                failures.append((inst, kind))
    ok = not failures
    record(9, "score tables bitwise invariant to calibration/test relabeling", ok,
           f"checked={checked} failures={failures}")
    assert ok


# ------------------------------------------------------------------ 10

def test_criterion_10_gradient_check():
    rng = np.random.default_rng(10)
    g = graph.generate_sbm(40, 2, 0.5, 0.1, 2, rng)
    obs = graph.observe(g, graph.sample_omega(g, 0.8, 0.8, rng))
    spec = scoring.ScorerSpec(kind="erm_logistic", k_hops=2, regularization=0.05)
    train = graph.pair_universe(obs.n, obs.directed)
    train = train[obs.omega[train[:, 0], train[:, 1]] == 1]
    feats = scoring.erm_feature_matrix(obs, train, spec)
    feats, _ = scoring.standardize(feats, feats[:0])
    labels = obs.a[train[:, 0], train[:, 1]].astype(float)
    errors = []
    for _ in range(10):
        theta = rng.normal(scale=0.5, size=feats.shape[1] + 1)
        _, grad = scoring.logistic_loss_grad(theta, feats, labels, spec.regularization)
        fd = central_difference(
            lambda t: scoring.logistic_loss_grad(t, feats, labels, spec.regularization)[0], theta)
        errors.append(np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12))
    ok = max(errors) <= 1e-5
    record(10, "logistic gradient vs central differences at 10 points", ok,
           f"max_rel_err={max(errors):.2e} dim={feats.shape[1] + 1} rows={len(labels)}")
    assert ok


# ------------------------------------------------------------------ 11

@pytest.mark.slow
def test_criterion_11_urn_sanity():
    rng = np.random.default_rng(11)
    sums_ok = True
    for m, ell in [(1, 1), (5, 17), (40, 3), (200, 200)]:
        hist = bounds.polya_histograms(m, ell, 2000, rng)
        sums_ok &= bool(np.all(hist.sum(axis=1) == ell) and np.all(hist >= 0))
        seq = np.array([bounds.polya_urn_draw(m, ell, rng) for _ in range(50)])
        sums_ok &= bool(np.all(seq.sum(axis=1) == ell))

    draws = 10_000
    seq_hits = sum(int(bounds.polya_urn_draw(1, 1, rng)[1]) for _ in range(draws))
    batch_hits = int(bounds.polya_histograms(1, 1, draws, rng)[:, 1].sum())
    se = math.sqrt(0.25 / draws)
    freq_ok = all(abs(h / draws - 0.5) <= 3 * se for h in (seq_hits, batch_hits))

    # colour exchangeability: the statistic of column-permuted histograms must
    # have the same law as that of unpermuted ones (independent samples)
    m, ell, size = 20, 50, 20_000
    plain = bounds.sup_deviations(
        bounds.polya_histograms(m, ell, size, np.random.default_rng(111)), m, ell)
    shuffled_hist = np.random.default_rng(113).permuted(
        bounds.polya_histograms(m, ell, size, np.random.default_rng(112)), axis=1)
    shuffled = bounds.sup_deviations(shuffled_hist, m, ell)
    ks = stats.ks_2samp(plain, shuffled)
    q_ok = True
    q_detail = []
    for q in (0.9, 0.95):
        diff = bounds.upper_quantile(plain, q) - bounds.upper_quantile(shuffled, q)
        tol = 3 * math.hypot(bounds.quantile_standard_error(plain, q),
                             bounds.quantile_standard_error(shuffled, q))
        q_ok &= abs(diff) <= tol
        q_detail.append(f"q{q}: |diff|={abs(diff):.4f} tol={tol:.4f}")
    ok = sums_ok and freq_ok and q_ok and ks.pvalue > 1e-3
    record(11, "Polya urn sanity", ok,
           f"sums_ok={sums_ok} colour1 freq seq={seq_hits / draws:.4f} "
           f"batch={batch_hits / draws:.4f} (0.5 +/- {3 * se:.4f}); "
           f"ks_p={ks.pvalue:.3f}; " + "; ".join(q_detail))
    assert ok
