import numpy as np
import pytest

from vmvp.config import (
    PhaseSpec,
    RunConfig,
    build_em_state,
    build_ensemble,
    build_initial_fields,
    load_config,
    resolve_config_path,
    save_config,
)
from vmvp.errors import ValidationError


def sample_config(**kw):
    phases = [
        PhaseSpec(mu=0.5, rho_modes=[((0, 0), 1.0), ((1, 0), 0.04)], xi_modes=[(0, (0, 0), 0.25)]),
        PhaseSpec(mu=0.5, rho_modes=[((0, 0), 1.0), ((1, 0), 0.04)], xi_modes=[(0, (0, 0), -0.25)]),
    ]
    defaults = dict(dim=2, cutoff=6, eps_list=[0.2], t_final=0.01, dt=1e-3, phases=phases, n_particles=64)
    defaults.update(kw)
    return RunConfig(**defaults)


class TestValidation:
    def test_dt_must_divide_t(self):
        with pytest.raises(ValidationError, match="divide"):
            sample_config(t_final=0.0105)

    def test_eps_range(self):
        with pytest.raises(ValidationError, match="eps"):
            sample_config(eps_list=[1.5])

    def test_delta_ordering(self):
        with pytest.raises(ValidationError, match="delta"):
            sample_config(delta0=1.1, delta1=1.2)

    def test_mode_whitelist(self):
        with pytest.raises(ValidationError, match="mode"):
            sample_config(mode="bogus")

    def test_kappa_formula(self):
        cfg = sample_config(alpha=0.9, moment_beta=0.1, gamma1=0.2, gamma2=0.15)
        assert cfg.kappa == pytest.approx(min(0.9 - (0.1 + 0.3), 1.0 - 0.35))


class TestRoundTrip:
    def test_lossless(self, tmp_path):
        cfg = sample_config(
            eps_list=[0.4, 0.2, 0.1],
            e0_modes=[(1, (1, 0), 0.125 + 0.0625j)],
            b0_modes=[(0, (0, 0), 0.05)],
            gamma=0.3,
            alpha=0.77,
        )
        p = tmp_path / "cfg.cfg"
        save_config(cfg, p)
        back = load_config(p)
        assert back == cfg

    def test_bundled_resolution(self):
        p = resolve_config_path("bundled/small2d")
        cfg = load_config(p)
        assert cfg.dim == 2 and cfg.cutoff == 8

    def test_unknown_bundled(self):
        with pytest.raises(ValidationError):
            resolve_config_path("bundled/nope")

    def test_missing_file(self):
        with pytest.raises(ValidationError):
            resolve_config_path("/does/not/exist.cfg")


class TestBuilders:
    def test_ensemble_and_em(self):
        cfg = sample_config()
        ens = build_ensemble(cfg, 0.2)
        assert len(ens.phases) == 2 and ens.eps == 0.2
        em = build_em_state(cfg, 0.2)
        assert em.eps == 0.2
        # well-prepared: transverse part vanishes
        assert np.abs(em.eps_adot.coeffs).max() < 1e-14

    def test_gamma_scaling(self):
        cfg = sample_config(e0_modes=[(1, (1, 0), 0.1)], gamma=1.0)
        _, e_small, _ = build_initial_fields(cfg, 0.1)
        _, e_big, _ = build_initial_fields(cfg, 0.2)
        # transverse amplitude scales as eps^-gamma
        idx = (1, cfg.cutoff + 1, cfg.cutoff)
        assert abs(e_small.coeffs[idx]) == pytest.approx(2 * abs(e_big.coeffs[idx]), rel=1e-12)

    def test_nontransverse_e0_rejected(self):
        cfg = sample_config(e0_modes=[(0, (1, 0), 0.1)])  # gradient-like mode
        with pytest.raises(ValidationError, match="transverse|divergence"):
            build_initial_fields(cfg, 0.2)
