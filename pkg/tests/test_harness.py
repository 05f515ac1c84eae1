import csv
import hashlib

import numpy as np
import pytest

from tomogcv import harness as H
from tomogcv import io as tio
from tomogcv import projector as P
from tomogcv.errors import GeometryError


@pytest.fixture(scope="module")
def mini_cfg(tmp_path_factory):
    grid = P.ImageGrid(24, 24)
    return H.SimConfig(
        phantom=H.PhantomSpec("shepp_logan", grid),
        geom=P.SinogramGeometry(24, 60),
        lambdas=(1e4, 1e5),
        n_replicates=3,
        seed=77,
        methods=("bpf:gcv", "bpf:oracle"),
    )


# ---------------------------------------------------------------------------
# phantoms
# ---------------------------------------------------------------------------


def test_uniform_disc_phantom():
    grid = P.ImageGrid(16, 16)
    img = H.make_phantom(H.PhantomSpec("uniform_disc", grid)).values
    assert set(np.unique(img)) == {0.0, 1.0}
    assert img[8, 8] == 1.0
    assert img[0, 0] == 0.0


def test_shepp_logan_deterministic_and_nonnegative():
    grid = P.ImageGrid(64, 64)
    a = H.make_phantom(H.PhantomSpec("shepp_logan", grid)).values
    b = H.make_phantom(H.PhantomSpec("shepp_logan", grid)).values
    assert a.min() >= 0.0
    assert a.max() > 0.5
    assert hashlib.sha256(a.tobytes()).hexdigest() == hashlib.sha256(b.tobytes()).hexdigest()


def test_file_phantom_round_trip(tmp_path):
    grid = P.ImageGrid(16, 16)
    img = H.make_phantom(H.PhantomSpec("shepp_logan", grid))
    hdr = tio.write_image(img, tmp_path / "ph")
    back = H.make_phantom(H.PhantomSpec("file", grid, path=str(hdr)))
    assert np.array_equal(back.values, img.values)


def test_file_phantom_shape_validated(tmp_path):
    img = H.make_phantom(H.PhantomSpec("shepp_logan", P.ImageGrid(16, 16)))
    hdr = tio.write_image(img, tmp_path / "ph")
    with pytest.raises(GeometryError):
        H.make_phantom(H.PhantomSpec("file", P.ImageGrid(24, 24), path=str(hdr)))


def test_unknown_phantom_kind_rejected():
    with pytest.raises(ValueError):
        H.PhantomSpec("cube", P.ImageGrid(8, 8))


# ---------------------------------------------------------------------------
# Poisson simulation
# ---------------------------------------------------------------------------


def test_simulate_total_counts_mean():
    grid = P.ImageGrid(16, 16)
    geom = P.SinogramGeometry(16, 40)
    phantom = H.make_phantom(H.PhantomSpec("shepp_logan", grid))
    lam = 1e4
    totals = np.array(
        [H.simulate_sinogram(phantom, geom, lam, seed=s).values.sum() for s in range(200)]
    )
    assert abs(totals.mean() - lam) < 4.0 * np.sqrt(lam)


def test_simulate_dispersion_index():
    grid = P.ImageGrid(16, 16)
    geom = P.SinogramGeometry(16, 40)
    phantom = H.make_phantom(H.PhantomSpec("shepp_logan", grid))
    lam = 1e6
    mu = P.radon_forward(phantom, geom).values
    mu = mu * (lam / mu.sum())
    draws = np.stack(
        [H.simulate_sinogram(phantom, geom, lam, seed=s).values for s in range(60)]
    )
    hot = mu > 1.0
    ratio = draws[:, hot].var(axis=0, ddof=1) / mu[hot]
    agg = ratio.mean()
    assert 0.9 < agg < 1.1


def test_simulate_reproducible_and_integer():
    grid = P.ImageGrid(16, 16)
    geom = P.SinogramGeometry(16, 40)
    phantom = H.make_phantom(H.PhantomSpec("shepp_logan", grid))
    a = H.simulate_sinogram(phantom, geom, 12345.0, seed=99).values
    b = H.simulate_sinogram(phantom, geom, 12345.0, seed=99).values
    assert np.array_equal(a, b)
    assert np.array_equal(a, np.round(a))
    assert a.min() >= 0
    c = H.simulate_sinogram(phantom, geom, 12345.0, seed=100).values
    assert not np.array_equal(a, c)


def test_poisson_icdf_matches_scipy():
    from scipy.stats import poisson

    rng = np.random.default_rng(4)
    mu = np.concatenate([rng.uniform(0.01, 30.0, 300), rng.uniform(100.0, 900.0, 50)])
    u = rng.random(350)
    mine = H._poisson_icdf(mu, u)
    ref = poisson.ppf(u, mu).astype(np.int64)
    assert np.array_equal(mine, ref)


def test_simulate_rejects_empty_phantom():
    grid = P.ImageGrid(16, 16)
    geom = P.SinogramGeometry(16, 40)
    zero = P.Image(np.zeros((16, 16)), grid)
    with pytest.raises(ValueError, match="empty"):
        H.simulate_sinogram(zero, geom, 1e4, seed=0)


def test_derive_seed_stable():
    assert H.derive_seed(7, 3, 1e5) == H.derive_seed(7, 3, 1e5)
    assert H.derive_seed(7, 3, 1e5) != H.derive_seed(7, 4, 1e5)
    assert H.derive_seed(7, 3, 1e5) != H.derive_seed(7, 3, 2e5)


# ---------------------------------------------------------------------------
# rmse
# ---------------------------------------------------------------------------


def test_rmse_zero_for_identical():
    grid = P.ImageGrid(8, 8)
    img = P.Image(np.random.default_rng(0).random((8, 8)) + 0.1, grid)
    assert H.rmse(img, img) == 0.0


def test_rmse_constant_offset_unnormalized():
    grid = P.ImageGrid(8, 8)
    base = P.Image(np.random.default_rng(1).random((8, 8)), grid)
    shifted = P.Image(base.values + 0.25, grid)
    assert abs(H.rmse(shifted, base, normalize=False) - 0.25) < 1e-14


def test_rmse_grid_mismatch():
    a = P.Image(np.ones((8, 8)), P.ImageGrid(8, 8))
    b = P.Image(np.ones((9, 9)), P.ImageGrid(9, 9))
    with pytest.raises(GeometryError):
        H.rmse(a, b)


# ---------------------------------------------------------------------------
# oracle search
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def oracle_setup():
    grid = P.ImageGrid(32, 32)
    geom = P.SinogramGeometry(32, 80)
    truth = H.make_phantom(H.PhantomSpec("shepp_logan", grid))
    y = H.simulate_sinogram(truth, geom, 1e5, seed=55)
    return grid, geom, truth, y


def test_oracle_no_worse_than_grid(oracle_setup):
    grid, geom, truth, y = oracle_setup
    res = H.oracle_bandwidth(y, truth, "bpf", h_grid=(0.5, 12.0))
    from tomogcv import kernels as K
    from tomogcv import recon as R

    solver = R.BpfSolver(y, grid)
    hs = np.exp(np.linspace(np.log(0.5), np.log(12.0), 60))
    for h in hs:
        r = H.rmse(solver.apply_kernel(K.gaussian_radial(h, grid)), truth)
        assert res.rmse <= r + 1e-12


def test_oracle_beats_gcv(oracle_setup):
    grid, geom, truth, y = oracle_setup
    from tomogcv import recon as R

    res = H.oracle_bandwidth(y, truth, "bpf")
    rec = R.reconstruct(R.ReconRequest(sinogram=y, grid=grid, method="bpf", bandwidth="gcv"))
    eff = res.rmse / H.rmse(rec.image, truth)
    assert eff <= 1.0 + 1e-3


def test_elliptical_oracle_nested_in_radial(oracle_setup):
    grid, geom, truth, y = oracle_setup
    radial = H.oracle_bandwidth(y, truth, "bpf")
    ell = H.oracle_bandwidth(y, truth, "bpfe")
    assert ell.rmse <= radial.rmse + 1e-9


def test_oracle_plus_family(oracle_setup):
    grid, geom, truth, y = oracle_setup
    plain = H.oracle_bandwidth(y, truth, "bpf")
    plus = H.oracle_bandwidth(y, truth, "bpf+")
    assert np.isfinite(plus.rmse)
    assert plus.rmse <= plain.rmse * 1.05  # "+" may differ but not blow up


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------


def test_run_experiment_record_count_and_ranges(mini_cfg):
    records = list(H.run_experiment(mini_cfg))
    assert len(records) == len(mini_cfg.lambdas) * mini_cfg.n_replicates * len(mini_cfg.methods)
    for rec in records:
        assert rec.rmse >= 0.0
        assert 0.0 < rec.efficiency <= 1.0 + 1e-3
        if rec.method.endswith(":oracle"):
            assert rec.efficiency == 1.0


def test_run_experiment_to_csv_reproducible(mini_cfg, tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    n1, summary1 = H.run_experiment_to_csv(mini_cfg, out1)
    n2, _ = H.run_experiment_to_csv(mini_cfg, out2)
    assert n1 == n2 == 12
    rows1 = list(csv.DictReader(open(out1)))
    rows2 = list(csv.DictReader(open(out2)))
    for r1, r2 in zip(rows1, rows2):
        for key in H.CSV_COLUMNS:
            if key != "wall_time_ms":
                assert r1[key] == r2[key]
    assert summary1.exists()
    srows = list(csv.DictReader(open(summary1)))
    assert len(srows) == len(mini_cfg.lambdas) * len(mini_cfg.methods)
    keys = {"lambda", "method", "n", "rmse_q1", "rmse_median", "rmse_q3",
            "eff_q1", "eff_median", "eff_q3"}
    assert keys <= set(srows[0])


def test_parallel_matches_serial_content(mini_cfg, tmp_path):
    serial = tmp_path / "serial.csv"
    par = tmp_path / "par.csv"
    H.run_experiment_to_csv(mini_cfg, serial, parallel=1)
    H.run_experiment_to_csv(mini_cfg, par, parallel=2)

    def content(path):
        rows = list(csv.DictReader(open(path)))
        key = lambda r: (float(r["lambda"]), int(r["replicate"]), r["method"])
        return [
            tuple(r[c] for c in H.CSV_COLUMNS if c != "wall_time_ms")
            for r in sorted(rows, key=key)
        ]

    assert content(serial) == content(par)


def test_resume_skips_completed(mini_cfg, tmp_path):
    out = tmp_path / "r.csv"
    H.run_experiment_to_csv(mini_cfg, out)
    before = out.read_bytes()
    n, _ = H.run_experiment_to_csv(mini_cfg, out, resume=True)
    assert n == 0
    assert out.read_bytes() == before


def test_resume_completes_partial(mini_cfg, tmp_path):
    out = tmp_path / "p.csv"
    n_full, _ = H.run_experiment_to_csv(mini_cfg, out)
    reference = list(csv.DictReader(open(out)))
    lines = out.read_text().splitlines(keepends=True)
    # truncate mid-replicate: one full group missing plus one half group
    out.write_text("".join(lines[: 1 + len(mini_cfg.methods) * 4 + 1]))
    n_more, _ = H.run_experiment_to_csv(mini_cfg, out, resume=True)
    assert n_more == 2 * len(mini_cfg.methods) - 1
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == n_full
    # resumed rows are identical to the reference run (bar timing)
    key = lambda r: (float(r["lambda"]), int(r["replicate"]), r["method"])
    for a, b in zip(sorted(rows, key=key), sorted(reference, key=key)):
        for col in H.CSV_COLUMNS:
            if col != "wall_time_ms":
                assert a[col] == b[col]


def test_run_experiment_with_elliptical_methods():
    grid = P.ImageGrid(24, 24)
    cfg = H.SimConfig(
        phantom=H.PhantomSpec("shepp_logan", grid),
        geom=P.SinogramGeometry(24, 60),
        lambdas=(1e5,),
        n_replicates=1,
        seed=5,
        methods=("bpfe:gcv", "bpfe:oracle", "bpfe+:gcv"),
    )
    records = {r.method: r for r in H.run_experiment(cfg)}
    assert set(records) == set(cfg.methods)
    for rec in records.values():
        assert rec.h2 is not None and rec.rho is not None
        assert 0.0 < rec.efficiency <= 1.0 + 1e-3
    assert records["bpfe:oracle"].efficiency == 1.0


def test_bad_method_string_rejected():
    grid = P.ImageGrid(16, 16)
    with pytest.raises(ValueError, match="family:selector"):
        H.SimConfig(
            phantom=H.PhantomSpec("shepp_logan", grid),
            geom=P.SinogramGeometry(16, 40),
            methods=("bpf-gcv",),
        )


def test_supplement_regime_runs_with_warning():
    grid = P.ImageGrid(24, 24)
    geom = P.SinogramGeometry(24, 25)  # n barely above p
    cfg = H.SimConfig(
        phantom=H.PhantomSpec("shepp_logan", grid),
        geom=geom,
        lambdas=(1e5,),
        n_replicates=1,
        methods=("bpf:gcv", "bpf+:gcv"),
    )
    P._projection_table.cache_clear()
    P.ktk_spectrum.cache_clear()
    with pytest.warns(UserWarning, match="near-square|not well above"):
        records = list(H.run_experiment(cfg))
    assert len(records) == 2
    for rec in records:
        assert np.isfinite(rec.rmse)
