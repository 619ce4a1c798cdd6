"""Acceptance criteria, one ``criterion`` group each.

Stochastic criteria run at their full stated chain lengths; the summary at
the end of the run prints PASS/FAIL per criterion with the measured values.
"""

import math
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from nrmi_mix.benchmark import StudySpec, load_marron_wand, run_study
from nrmi_mix.calibration import CalibrationTarget, calibrate, mc_expected_clusters
from nrmi_mix.cli import read_data
from nrmi_mix.config import load_json, parse_run_config
from nrmi_mix.crm import NggParams, invert_tail_mass, sample_atom_series, tail_mass
from nrmi_mix.diagnostics import ess
from nrmi_mix.gibbs import (GibbsConfig, MixtureModel, log_u_conditional, run_chain,
                            step_fixed_jumps, step_u)
from nrmi_mix.mixture import (BaseMeasure, GammaBase, GammaHyperprior, NormalBase,
                              NormalGammaHyperprior, update_hyperparameters)

from oracles import ks_against_cdf, tv_against_grid

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
SEEDS = (1, 2, 3)

C1 = "1. Calibration reproduction"
C2 = "2. Closed-form oracles for the tail-mass inversion"
C3 = "3. Conditional-law oracles"
C4 = "4. Galaxy study"
C5 = "5. Enzyme study"
C6 = "6. Simulation benchmark (N=5)"
C7 = "7. Structural invariants"
C8 = "8. ESS sanity"


def majority(flags) -> bool:
    flags = list(flags)
    return sum(flags) * 2 > len(flags)


# -- 1 -----------------------------------------------------------------------

@pytest.mark.criterion(C1)
@pytest.mark.parametrize("n,c,lo,hi", [(82, 12, 3.60, 3.68), (245, 20, 4.92, 5.03)])
def test_dirichlet_calibration(n, c, lo, hi, note):
    a = calibrate(CalibrationTarget(n, c)).value
    note(f"Dirichlet a(n={n}, c={c}) = {a:.4f}, required in [{lo}, {hi}]")
    assert lo <= a <= hi


@pytest.mark.criterion(C1)
@pytest.mark.parametrize("params,n,c", [(NggParams(1, 0.015, 0.5), 82, 12),
                                        (NggParams(1, 0, 0.537), 82, 12),
                                        (NggParams(1, 0, 0.396), 250, 10)])
def test_mc_expected_clusters(params, n, c, note):
    e = mc_expected_clusters(params, n, replicates=4000, rng=2024)
    note(f"E(R_{n}) under NGG({params.a:g}, {params.kappa:g}, {params.gamma:g}) = "
         f"{e.mean:.3f} +- {e.se:.3f}, target {c}")
    assert abs(e.mean - c) < 3 * e.se


# -- 2 -----------------------------------------------------------------------

@pytest.mark.criterion(C2)
def test_stable_inverse_closed_form(note):
    xi = np.geomspace(1e-3, 1e3, 61)
    g = 0.5
    exact = (xi * g * gamma_fn(1 - g)) ** (-1 / g)
    j = invert_tail_mass(NggParams(1, 0, g).tilted(), xi)
    err = np.max(np.abs(j - exact) / j)
    note(f"max relative error over 61 points = {err:.2e}")
    assert err < 1e-6


@pytest.mark.criterion(C2)
@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_stable_inverse_closed_form_property(xi):
    j = invert_tail_mass(NggParams(1, 0, 0.5).tilted(), xi)
    assert abs(j - (xi * 0.5 * math.sqrt(math.pi)) ** -2) / j < 1e-6


@pytest.mark.criterion(C2)
def test_dirichlet_tail_against_quadrature(note):
    tt = NggParams(2, 1, 0).tilted()
    worst = 0.0
    for v in np.geomspace(1e-6, 20, 40):
        # 2 E1(v) written as an integral over log s to keep quad well scaled
        ref = 2 * quad(lambda t: math.exp(-math.exp(t)), math.log(v), math.log(v) + 50,
                       epsabs=0, epsrel=1e-13, limit=400)[0]
        worst = max(worst, abs(tail_mass(tt, v) - ref) / ref)
    note(f"max relative error against quadrature = {worst:.2e}")
    assert worst < 1e-8


# -- 3 -----------------------------------------------------------------------

@pytest.mark.criterion(C3)
@pytest.mark.parametrize("nj,params,u", [(1, NggParams(1, 0.015, 0.5), 2.0),
                                         (7, NggParams(1, 0.015, 0.5), 0.3),
                                         (3, NggParams(3.641, 1, 0.0), 5.0),
                                         (12, NggParams(1, 0, 0.396), 1.2)])
def test_fixed_jump_law(nj, params, u, note):
    rng = np.random.default_rng(nj)
    d = step_fixed_jumps(np.full(100_000, nj), u, params, rng)
    law = stats.gamma(nj - params.gamma, scale=1 / (params.kappa + u))
    obs = np.histogram(d, law.ppf(np.linspace(0, 1, 51)))[0]
    p = stats.chisquare(obs).pvalue
    note(f"fixed jumps n_j={nj}, gamma={params.gamma:g}: chi-square p = {p:.3f}")
    assert p > 1e-3


@pytest.mark.criterion(C3)
@pytest.mark.parametrize("params", [NggParams(1, 0.015, 0.5), NggParams(3.641, 1, 0.0)])
def test_u_chain_against_quadrature(params, note):
    n, r = 6, 3
    norm = quad(lambda v: math.exp(log_u_conditional(n, r, params, v)), 0, np.inf, limit=400)[0]
    grid = np.concatenate([[0.0], np.geomspace(1e-7, 1e5, 40_000)])
    dens = np.exp(log_u_conditional(n, r, params, grid)) / norm
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    rng = np.random.default_rng(5)
    u = 1.0
    for _ in range(2000):
        u, _ = step_u(u, n, r, params, 4.0, rng)
    draws = np.empty(100_000)
    for i in range(draws.size):
        u, _ = step_u(u, n, r, params, 4.0, rng)
        draws[i] = u
    d = ks_against_cdf(draws, grid, cdf)
    note(f"u-chain KS (gamma={params.gamma:g}) = {d:.4f}")
    assert d < 0.02


@pytest.mark.criterion(C3)
def test_gamma_hyperprior_against_grid(note):
    mus = np.array([9.2, 16.1, 19.9, 21.5, 23.4, 26.0, 32.8])
    hp = GammaHyperprior(0.01, 0.01)
    bm = BaseMeasure(GammaBase(), 1.0, 1.0, hp)
    rng = np.random.default_rng(31)
    draws = np.array([update_hyperparameters(bm, mus, rng).mu_base.phi for _ in range(100_000)])
    phi = np.geomspace(1e-4, 1.0, 5000)
    logp = stats.gamma.logpdf(phi, hp.psi1, scale=1 / hp.psi2)
    logp += sum(stats.expon.logpdf(m, scale=1 / phi) for m in mus)
    tv = tv_against_grid(draws, phi, logp)
    note(f"gamma-base hyperparameter TV = {tv:.4f}")
    assert tv < 0.01


@pytest.mark.criterion(C3)
def test_normal_gamma_hyperprior_against_grid(note):
    mus = np.array([-1.3, -0.2, 0.4, 2.2])
    hp = NormalGammaHyperprior(0.0, 0.01, 0.1, 0.1)
    bm = BaseMeasure(NormalBase(), 1.0, 1.0, hp)
    rng = np.random.default_rng(32)
    draws = np.empty((100_000, 2))
    for i in range(draws.shape[0]):
        b = update_hyperparameters(bm, mus, rng).mu_base
        draws[i] = b.phi1, b.phi2
    p1 = np.linspace(-60, 60, 1601)
    p2 = np.geomspace(1e-4, 20, 1600)
    P1, P2 = np.meshgrid(p1, p2, indexing="ij")
    logp = (stats.norm.logpdf(P1, hp.psi1, 1 / np.sqrt(hp.psi2 * P2))
            + stats.gamma.logpdf(P2, hp.psi3, scale=1 / hp.psi4))
    for m in mus:
        logp += stats.norm.logpdf(m, P1, 1 / np.sqrt(P2))
    w = np.exp(logp - logp.max())
    tv1 = tv_against_grid(draws[:, 0], p1, np.log((w * np.gradient(p2)).sum(axis=1)))
    tv2 = tv_against_grid(draws[:, 1], p2, np.log((w * np.gradient(p1)[:, None]).sum(axis=0)))
    note(f"normal-gamma hyperparameter TV = {tv1:.4f} (location), {tv2:.4f} (precision)")
    assert tv1 < 0.01 and tv2 < 0.01


# -- 4 and 8 -----------------------------------------------------------------

def _galaxy_run(process: str, seed: int):
    cfg = parse_run_config(load_json(CONFIGS / f"galaxy-{process}.json")).with_seed(seed)
    x = read_data(ROOT / "src" / "nrmi_mix" / "data" / "galaxy.csv")
    fit = run_chain(x, cfg.model, cfg.chain)
    s = fit.cpo_summaries()
    return {"mode": fit.rn_posterior().mode, "alcpo": s.alcpo, "mlcpo": s.mlcpo,
            "ess": fit.ess(), "kept": fit.n_kept}


@pytest.fixture(scope="module")
def galaxy_runs():
    return {(p, s): _galaxy_run(p, s) for p in ("nig", "dirichlet") for s in SEEDS}


@pytest.mark.criterion(C4)
def test_galaxy_nig(galaxy_runs, note):
    runs = [galaxy_runs["nig", s] for s in SEEDS]
    for s, r in zip(SEEDS, runs):
        note(f"N-IG seed {s}: mode {r['mode']}, ALCPO {r['alcpo']:.3f}, MLCPO {r['mlcpo']:.3f}")
    assert majority(r["mode"] in (4, 5, 6) for r in runs)
    assert majority(abs(r["alcpo"] + 2.608) <= 0.10 for r in runs)
    assert majority(abs(r["mlcpo"] + 2.099) <= 0.15 for r in runs)


@pytest.mark.criterion(C4)
def test_galaxy_dirichlet(galaxy_runs, note):
    runs = [galaxy_runs["dirichlet", s] for s in SEEDS]
    for s, r in zip(SEEDS, runs):
        note(f"Dirichlet seed {s}: mode {r['mode']}, ALCPO {r['alcpo']:.3f}, MLCPO {r['mlcpo']:.3f}")
    assert majority(r["mode"] in (6, 7, 8) for r in runs)
    assert sum(galaxy_runs["dirichlet", s]["mode"] > galaxy_runs["nig", s]["mode"]
               for s in SEEDS) >= 2


@pytest.mark.criterion(C8)
def test_ess_iid(note):
    x = np.random.default_rng(81).standard_normal(4500)
    e = ess(x)
    note(f"i.i.d. ESS = {e:.0f} of 4500")
    assert abs(e - 4500) < 0.10 * 4500


@pytest.mark.criterion(C8)
def test_ess_ar1(note):
    rng = np.random.default_rng(82)
    rho, t = 0.6, 4500
    e = rng.standard_normal(t + 1000)
    x = np.empty_like(e)
    x[0] = e[0]
    for i in range(1, e.size):
        x[i] = rho * x[i - 1] + e[i]
    expect = t * (1 - rho) / (1 + rho)
    got = ess(x[1000:])
    note(f"AR(1) rho=0.6 ESS = {got:.0f}, exact {expect:.0f}")
    assert abs(got - expect) < 0.15 * expect


@pytest.mark.criterion(C8)
def test_galaxy_total_jump_ess(galaxy_runs, note):
    runs = [galaxy_runs["nig", s] for s in SEEDS]
    for s, r in zip(SEEDS, runs):
        note(f"galaxy N-IG seed {s}: total-jump ESS {r['ess']:.0f} of {r['kept']}")
    assert majority(800 <= r["ess"] <= 2000 for r in runs)


# -- 5 -----------------------------------------------------------------------

def _enzyme_path() -> Path:
    env = os.environ.get("NRMI_MIX_ENZYME_DATA")
    return Path(env) if env else ROOT / "src" / "nrmi_mix" / "data" / "enzyme.csv"


@pytest.mark.criterion(C5)
def test_enzyme(note):
    path = _enzyme_path()
    if not path.is_file():
        note(f"enzyme data not found at {path}; set NRMI_MIX_ENZYME_DATA to a one-column CSV")
        pytest.fail(f"enzyme data set missing: {path}")
    x = read_data(path)
    out = {}
    for process in ("nig", "dirichlet"):
        cfg = parse_run_config(load_json(CONFIGS / f"enzyme-{process}.json"))
        fit = run_chain(x, cfg.model, cfg.chain)
        out[process] = (fit.rn_posterior().mode, fit.cpo_summaries().mlcpo)
        note(f"{process}: mode {out[process][0]}, MLCPO {out[process][1]:.3f}")
    assert out["nig"][0] in (2, 3)
    assert out["nig"][1] > out["dirichlet"][1]


# -- 6 -----------------------------------------------------------------------

@pytest.mark.criterion(C6)
@pytest.mark.parametrize("model", [1, 5, 8])
def test_marron_wand_rmise(model, note):
    spec = StudySpec(load_marron_wand(model), replicates=5, n=250)
    rep = run_study(spec, seed=2024 + model)
    agg = rep["aggregate"]
    note(f"MW{model}: RMISE {agg['rmise']}, failed replicates {agg['n_failed']}")
    assert agg["n_failed"] == 0
    assert agg["rmise"] < 1


# -- 7 -----------------------------------------------------------------------

def _short_fit(galaxy, process, seed=11):
    params = NggParams(1, 0.015, 0.5) if process == "nig" else NggParams.dirichlet(3.641)
    model = MixtureModel(params, base=BaseMeasure.gamma(1.0, 1.0, GammaHyperprior(0.01, 0.01)))
    cfg = GibbsConfig(iterations=800, burn_in=200, thinning=2, seed=seed, grid_points=200)
    return run_chain(galaxy, model, cfg, check_every=1)


@pytest.fixture(scope="module", params=["nig", "dirichlet"])
def short_fit(request):
    x = np.loadtxt(ROOT / "src" / "nrmi_mix" / "data" / "galaxy.csv", skiprows=1)
    return request.param, _short_fit(x, request.param)


@pytest.mark.criterion(C7)
def test_weights_and_truncation(short_fit, note):
    process, fit = short_fit
    note(f"{process}: weight-sum error {fit.max_weight_sum_error:.1e}, "
         f"truncation ratio {fit.max_truncation_ratio:.2e}")
    assert fit.max_weight_sum_error <= 1e-12
    assert fit.max_truncation_ratio < 1e-4


@pytest.mark.criterion(C7)
def test_allocation_bookkeeping(short_fit):
    # check_every=1 already verified counts against labels at every iteration
    _, fit = short_fit
    assert np.all(fit.rn_trace >= 1) and np.all(fit.rn_trace <= fit.n)
    assert np.bincount(fit.labels).min() >= 1


@pytest.mark.criterion(C7)
@settings(max_examples=40, deadline=None)
@given(st.sampled_from([NggParams(1, 0.015, 0.5), NggParams(3.641, 1, 0), NggParams(1, 0, 0.396)]),
       st.floats(0.01, 50), st.integers(0, 2**32 - 1))
def test_jumps_strictly_decrease(params, tilt, seed):
    s = sample_atom_series(params.tilted(tilt), None, 1e-4, np.random.default_rng(seed))
    assert np.all(np.diff(s.jumps) < 0)
    assert s.discarded_head < s.jumps[-1]
    assert s.truncation_ratio < 1e-4


@pytest.mark.criterion(C7)
def test_byte_identical_artifacts(galaxy, tmp_path):
    a, b = _short_fit(galaxy, "nig", seed=3), _short_fit(galaxy, "nig", seed=3)
    a.save(tmp_path / "a", save_paths=True)
    b.save(tmp_path / "b", save_paths=True)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
