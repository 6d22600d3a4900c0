"""End-to-end acceptance checks for the headline behaviors.

Each test prints one PASS/FAIL line (visible with -s or on failure) and
asserts the corresponding claim:

1. on-policy four-algorithm comparison (calibration dichotomy)
2. off-policy 12-run grid (schedule insensitivity + heavy clipping)
3. saturation of the default GRPO run vs calibrated fits
4. exact 8-outcome enumeration oracle for the G=2 estimators
5. Monte-Carlo advantage-bias curves vs theory (log-likelihood)
6. Brier-reward replication and per-outcome reward spreads
7. algebraic / numerical property spot checks
8. scope statement: desk-scale synthetic study only

Two sub-checks (4b, 5b) compare estimator means at tokens the default
analysis cannot report; they are implemented literally, fail by
construction, and are kept as documentation of that limit. The adjacent
checks cover the same behavior at the nearest reportable tokens.
"""

import itertools
import time
from dataclasses import replace

import numpy as np
import pytest

from pgcalib import (Algo, EstimatorSpec, RewardRule, TabularPolicy,
                     TrainConfig, adv_grpo, adv_grpo_nostd, adv_rloo,
                     approx_grpo_advantage, discretize_beta,
                     empirical_advantage_curve, expected_nostd_advantage,
                     run, sigma_estimates, true_advantage)
from pgcalib.cli import TRAIN_DEFAULTS
from pgcalib.env import gen_categories, gen_dataset, reward
from pgcalib.metrics import accuracy, auroc, ece
from pgcalib.trainer import clipped_pg_step, collect_rollouts, vanilla_pg_step

ALGOS = ["grpo", "grpo-nostd", "rloo", "ppo"]
CALIBRATED = ["grpo-nostd", "rloo", "ppo"]
SCHEDULES = [(1, None), (10, 0.2), (10, 0.001)]
LL = RewardRule.LOG_LIKELIHOOD


def report(name, ok, detail=""):
    line = f"[{name}] {'PASS' if ok else 'FAIL'} {detail}".rstrip()
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def world():
    table = gen_categories(TRAIN_DEFAULTS["k"], TRAIN_DEFAULTS["world_seed"])
    train = gen_dataset(table, TRAIN_DEFAULTS["dataset_size"],
                        TRAIN_DEFAULTS["world_seed"], split="train")
    heldout = gen_dataset(table, TRAIN_DEFAULTS["eval_size"],
                          TRAIN_DEFAULTS["world_seed"] + 1, split="eval")
    return table, train, heldout


@pytest.fixture(scope="session")
def grid(world):
    """The 12-run grid: 4 algorithms x 3 update schedules, default config."""
    table, train, heldout = world
    out = {}
    for algo, (updates, clip) in itertools.product(ALGOS, SCHEDULES):
        cfg = TrainConfig(algo=EstimatorSpec(Algo(algo)),
                          updates_per_rollout=updates, clip_eps=clip)
        t0 = time.monotonic()
        res = run(cfg, table, train, heldout)
        elapsed = time.monotonic() - t0
        mean_preds = np.array([m for _, _, m in res.category_pairs])
        cfmax = max(row.clip_fraction for row in res.log)
        out[(algo, updates, clip)] = {
            "eval": res.eval_report, "mean_preds": mean_preds,
            "cfmax": cfmax, "seconds": elapsed}
    return out


def test_criterion_1_onpolicy_dichotomy(grid):
    on = {a: grid[(a, 1, None)] for a in ALGOS}
    checks = []
    g_ece = on["grpo"]["eval"].ece
    checks.append(("grpo ece in [0.18,0.30]", 0.18 <= g_ece <= 0.30))
    for a in CALIBRATED:
        checks.append((f"{a} ece <= 0.02", on[a]["eval"].ece <= 0.02))
        checks.append((f"auroc gap {a} >= 0.03",
                       on["grpo"]["eval"].auroc
                       <= on[a]["eval"].auroc - 0.03))
    accs = [on[a]["eval"].accuracy for a in ALGOS]
    checks.append(("accuracies within 0.03", max(accs) - min(accs) <= 0.03))
    total = sum(on[a]["seconds"] for a in ALGOS)
    checks.append(("runtime <= 5 min", total <= 300.0))
    bad = [name for name, ok in checks if not ok]
    detail = (f"grpo_ece={g_ece:.4f} "
              + " ".join(f"{a}={on[a]['eval'].ece:.4f}" for a in CALIBRATED)
              + (f" failing: {bad}" if bad else ""))
    report("criterion 1", not bad, detail)


def test_criterion_2_offpolicy_grid(grid):
    checks = []
    for a in ALGOS:
        eces = [grid[(a, u, c)]["eval"].ece for u, c in SCHEDULES]
        checks.append((f"{a} ece spread <= 0.02",
                       max(eces) - min(eces) <= 0.02))
    for a in ALGOS:
        checks.append((f"{a} clip-0.001 logs clip_fraction > 0.5",
                       grid[(a, 10, 0.001)]["cfmax"] > 0.5))
    total = sum(cell["seconds"] for cell in grid.values())
    checks.append(("runtime <= 20 min", total <= 1200.0))
    bad = [name for name, ok in checks if not ok]
    report("criterion 2", not bad,
           f"total={total:.0f}s" + (f" failing: {bad}" if bad else ""))


def test_criterion_3_saturation(grid, world):
    table = world[0]
    lo = table.rates < 0.48
    hi = table.rates > 0.52
    preds = grid[("grpo", 1, None)]["mean_preds"]
    checks = [("grpo low-rate mean preds <= 0.03", preds[lo].max() <= 0.03),
              ("grpo high-rate mean preds >= 0.97", preds[hi].min() >= 0.97)]
    for a in CALIBRATED:
        close = np.abs(grid[(a, 1, None)]["mean_preds"] - table.rates) <= 0.07
        checks.append((f"{a} within 0.07 on >= 18/20", close.sum() >= 18))
    bad = [name for name, ok in checks if not ok]
    report("criterion 3", not bad,
           f"satlo={preds[lo].max():.3f} sathi={preds[hi].min():.3f}"
           + (f" failing: {bad}" if bad else ""))


TWO_TOKENS = np.array([0.2, 0.8])
TWO_DIST = np.array([0.5, 0.5])


def enumerate_pairs(tokens, dist, p_true, estimator):
    """Exact E[advantage | first member's token] for G=2 (8-outcome sum)."""
    num = np.zeros(len(tokens))
    den = np.zeros(len(tokens))
    fns = {"rloo": adv_rloo, "nostd": adv_grpo_nostd, "grpo": adv_grpo}
    for (i, j) in itertools.product(range(len(tokens)), repeat=2):
        for answer, pa in ((1, p_true), (0, 1.0 - p_true)):
            prob = dist[i] * dist[j] * pa
            rewards = np.array([reward(tokens[i], answer, LL),
                                reward(tokens[j], answer, LL)])
            adv = fns[estimator](rewards)
            num[i] += prob * adv[0]
            den[i] += prob
    return num / den


def test_criterion_4a_enumeration_oracle():
    exact = np.array([true_advantage(TWO_DIST, 0.7, t, LL, tokens=TWO_TOKENS)
                      for t in TWO_TOKENS])
    rloo = enumerate_pairs(TWO_TOKENS, TWO_DIST, 0.7, "rloo")
    nostd = enumerate_pairs(TWO_TOKENS, TWO_DIST, 0.7, "nostd")
    ok = (np.all(np.abs(rloo - exact) < 1e-12)
          and np.all(np.abs(nostd - 0.5 * exact) < 1e-12)
          and abs(nostd[1] - 0.1386) < 5e-5
          and abs(nostd[1] - expected_nostd_advantage(
              TWO_DIST, 0.7, 0.8, LL, g=2, tokens=TWO_TOKENS)) < 1e-12)
    report("criterion 4a", ok, f"nostd(0.8)={nostd[1]:.6f}")


def test_criterion_4b_two_token_ratio_witness():
    # literal check: the normalized estimator's token-wise ratio to the
    # exact advantage should be non-constant. With exactly two equally
    # likely tokens both quantities are zero-mean over the pair, so the
    # ratio is provably constant and this check fails by construction;
    # the three-token supplement below carries the actual bias witness.
    exact = np.array([true_advantage(TWO_DIST, 0.7, t, LL, tokens=TWO_TOKENS)
                      for t in TWO_TOKENS])
    grpo = enumerate_pairs(TWO_TOKENS, TWO_DIST, 0.7, "grpo")
    ratios = grpo / exact
    report("criterion 4b (impossible as stated)",
           abs(ratios[1] - ratios[0]) > 1e-9,
           f"ratios={ratios[0]:.9f},{ratios[1]:.9f}")


def test_criterion_4_supplement_three_token_witness():
    tokens = np.array([0.2, 0.5, 0.8])
    dist = np.full(3, 1 / 3)
    exact = np.array([true_advantage(dist, 0.7, t, LL, tokens=tokens)
                      for t in tokens])
    grpo = enumerate_pairs(tokens, dist, 0.7, "grpo")
    ratios = grpo / exact
    report("criterion 4 supplement", float(np.ptp(ratios)) > 0.05,
           f"ratio spread={np.ptp(ratios):.3f}")


@pytest.fixture(scope="session")
def bias_curves():
    """Empirical curves for both estimators, three policies, both rules."""
    out = {}
    for rule in (LL, RewardRule.BRIER):
        for a, b in ((1.0, 1.0), (5.7, 3.0), (50.0, 1.0)):
            pol = discretize_beta(a, b)
            for est in (Algo.GRPO, Algo.GRPO_NO_STD):
                t0 = time.monotonic()
                curve = empirical_advantage_curve(
                    pol, 0.7, rule, EstimatorSpec(est), g=1000,
                    n_samples=100_000, min_count=1000, seed=0)
                out[(rule, (a, b), est)] = (curve,
                                            time.monotonic() - t0)
    return out


def _nostd_tracks(curve):
    rep = curve.reported
    gap = np.abs(curve.est_mean[rep] - (999 / 1000) * curve.exact[rep])
    return bool(np.all(gap <= 3 * curve.est_stderr[rep]))


def _inversion(curve, anchor="high"):
    """Estimated advantage prefers the extreme reported token while the
    exact advantage prefers the moderate one."""
    rep = np.where(curve.reported)[0]
    i70 = list(curve.tokens).index(0.70)
    if anchor == "high":
        other = rep[-1]
        base = i70
    else:
        other = rep[-1]
        base = rep[0]
    return (curve.est_mean[other] > curve.est_mean[base]
            and curve.exact[other] < curve.exact[base])


def test_criterion_5a_bias_curves_loglik(bias_curves):
    checks = []
    uni_nostd, _ = bias_curves[(LL, (1.0, 1.0), Algo.GRPO_NO_STD)]
    checks.append(("Beta(1,1) no-std tracks theory",
                   _nostd_tracks(uni_nostd)))
    uni_grpo, _ = bias_curves[(LL, (1.0, 1.0), Algo.GRPO)]
    pol = discretize_beta(1.0, 1.0)
    sig = sigma_estimates(pol, LL, g=1000, n_groups=2000, seed=0)
    theory = (999 / 1000) * approx_grpo_advantage(pol, 0.7, LL, sig,
                                                  eps=1e-4)
    rep = uni_grpo.reported
    gap = np.abs(uni_grpo.est_mean[rep] - theory[rep])
    checks.append(("Beta(1,1) grpo tracks sigma theory",
                   bool(np.all(gap <= 3 * uni_grpo.est_stderr[rep]))))
    for shape in ((5.7, 3.0), (50.0, 1.0)):
        curve, _ = bias_curves[(LL, shape, Algo.GRPO_NO_STD)]
        checks.append((f"Beta{shape} no-std tracks theory",
                       _nostd_tracks(curve)))
    for t in bias_curves.values():
        checks.append(("runtime <= 2 min per panel", t[1] <= 120.0))
    bad = [name for name, ok in checks if not ok]
    report("criterion 5a", not bad, f"failing: {bad}" if bad else "")


def test_criterion_5b_literal_extreme_tokens(bias_curves):
    # literal check: GRPO est_mean at token 0.99 exceeds est_mean at token
    # 0.70 for Beta(5.7,3) and Beta(50,1). With 100,000 samples and a
    # 1000-occurrence reporting floor, token 0.99 is unreported under
    # Beta(5.7,3) (~16 occurrences) and token 0.70 under Beta(50,1)
    # (~0.1 occurrences), so the comparison is undefined and this fails
    # by construction; the supplement below uses the nearest reported
    # tokens.
    ok = True
    for shape in ((5.7, 3.0), (50.0, 1.0)):
        curve, _ = bias_curves[(LL, shape, Algo.GRPO)]
        i70 = list(curve.tokens).index(0.70)
        i99 = list(curve.tokens).index(0.99)
        both = bool(curve.reported[i70] and curve.reported[i99])
        ok = ok and both and curve.est_mean[i99] > curve.est_mean[i70]
    report("criterion 5b (impossible as stated)", ok)


def test_criterion_5_supplement_inversions(bias_curves):
    checks = []
    for shape, anchor in (((5.7, 3.0), "high"), ((50.0, 1.0), "low")):
        curve, _ = bias_curves[(LL, shape, Algo.GRPO)]
        checks.append((f"Beta{shape} inversion", _inversion(curve, anchor)))
    bad = [name for name, ok in checks if not ok]
    report("criterion 5 supplement", not bad,
           f"failing: {bad}" if bad else "")


def test_criterion_6_brier_and_sigmas(bias_curves):
    checks = []
    for shape, anchor in (((5.7, 3.0), "high"), ((50.0, 1.0), "low")):
        curve, _ = bias_curves[(RewardRule.BRIER, shape, Algo.GRPO)]
        checks.append((f"Brier Beta{shape} inversion",
                       _inversion(curve, anchor)))
        nostd, _ = bias_curves[(RewardRule.BRIER, shape, Algo.GRPO_NO_STD)]
        checks.append((f"Brier Beta{shape} no-std tracks theory",
                       _nostd_tracks(nostd)))
    for a, b in ((5.7, 3.0), (50.0, 1.0)):
        s = sigma_estimates(discretize_beta(a, b), LL, g=1000,
                            n_groups=2000, seed=0)
        checks.append((f"Beta({a},{b}) sigma0 > sigma1",
                       s.sigma0 - s.sigma1 > 3 * (s.stderr0 + s.stderr1)))
    s = sigma_estimates(discretize_beta(1.0, 1.0), LL, g=1000,
                        n_groups=2000, seed=0)
    checks.append(("Beta(1,1) sigma0 ~= sigma1",
                   abs(s.sigma0 - s.sigma1) <= 3 * (s.stderr0 + s.stderr1)))
    bad = [name for name, ok in checks if not ok]
    report("criterion 6", not bad, f"failing: {bad}" if bad else "")


def test_criterion_7_property_suite():
    rng = np.random.default_rng(0)
    checks = []
    ok = True
    for _ in range(10_000):
        g = int(rng.integers(2, 9))
        r = rng.normal(size=g)
        ok = ok and np.allclose(adv_grpo_nostd(r), (g - 1) / g * adv_rloo(r),
                                atol=1e-12)
    checks.append(("no-std == ((G-1)/G) rloo on 1e4 groups", ok))
    r = rng.normal(size=(200, 6))
    checks.append(("grpo scale invariance at eps=0",
                   np.allclose(adv_grpo(5.0 * r, eps=0.0),
                               adv_grpo(r, eps=0.0), atol=1e-10)))
    checks.append(("no-std zero-sum",
                   np.all(np.abs(adv_grpo_nostd(r).sum(axis=1)) < 1e-10)))
    # log-softmax gradient vs central differences
    policy = TabularPolicy(rng.normal(size=(1, 99)))
    analytic = policy.grad_logprob(0, 17)
    h = 1e-5
    worst = 0.0
    for j in range(99):
        up = policy.logits.copy()
        up[0, j] += h
        down = policy.logits.copy()
        down[0, j] -= h
        num = (TabularPolicy(up).log_probs_all()[0, 17]
               - TabularPolicy(down).log_probs_all()[0, 17]) / (2 * h)
        worst = max(worst, abs(num - analytic[j]))
    checks.append(("gradient finite differences <= 1e-6", worst <= 1e-6))
    # on-policy clipped update == vanilla update
    table = gen_categories(4, 5)
    ds = gen_dataset(table, 200, 5)
    cfg = TrainConfig(algo=EstimatorSpec(Algo.GRPO_NO_STD), steps=1,
                      prompts_per_rollout=32)
    batch = collect_rollouts(TabularPolicy.zeros(4), None, ds, cfg, 0)
    adv = adv_grpo_nostd(batch.rewards)
    a = TabularPolicy.zeros(4)
    b = TabularPolicy.zeros(4)
    vanilla_pg_step(a, batch, adv, lr=1.0)
    clipped_pg_step(b, batch, adv, clip_eps=0.2, lr=1.0)
    checks.append(("on-policy clipped == vanilla",
                   np.allclose(a.logits, b.logits, atol=1e-12)))
    checks.append(("metric unit examples",
                   ece([0.8, 0.8, 0.2, 0.2], [1, 0, 0, 0]) == 0.25
                   and auroc([0.9, 0.1], [1, 0]) == 1.0
                   and accuracy([0.5], [0]) == 1.0))
    cfg_small = replace(cfg, steps=20)
    r1 = run(cfg_small, table, ds, ds)
    r2 = run(cfg_small, table, ds, ds)
    checks.append(("full-run determinism",
                   np.array_equal(r1.policy.logits, r2.policy.logits)))
    bad = [name for name, ok_ in checks if not ok_]
    report("criterion 7", not bad, f"failing: {bad}" if bad else "")


def test_criterion_8_scope():
    # the wet-lab / LLM-scale experiment is explicitly out of scope:
    # this package is a desk-scale synthetic study with no GPU or
    # language-model dependencies.
    import pathlib
    pyproject = pathlib.Path(__file__).resolve().parents[1] / "pyproject.toml"
    text = pyproject.read_text().lower()
    heavy = [s for s in ("torch", "transformers", "jax", "tensorflow",
                         "cuda") if s in text]
    report("criterion 8", not heavy, "synthetic-only substitution")
