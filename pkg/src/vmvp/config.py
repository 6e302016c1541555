"""Run configuration: typed dataclasses and a flat-section text format.

Config files are INI-style: one [run] section with the scalar knobs, [norms]
and [hypotheses] for the analytic-norm and ledger exponents, [fields] for
the initial electromagnetic mode tables, and one [phase.N] section per
phase.  Mode tables are one mode per line, "comp k1 .. kd re im"; each line
also deposits the conjugate at -k, so real fields list one representative
per pair.  Floats are written with repr so a config round-trips losslessly.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .fields import EMState, init_em_state
from .multifluid import Phase, PhaseEnsemble
from .spectral import SpectralField, gradient, leray_project, mean, solve_poisson

MODES = ("vm", "vp", "pair", "sweep", "ck", "verify")


@dataclass
class PhaseSpec:
    mu: float
    rho_modes: list   # [(kvec, complex amp)]
    xi_modes: list    # [(comp, kvec, complex amp)]


@dataclass
class RunConfig:
    dim: int = 2
    cutoff: int = 16
    eps_list: list = field(default_factory=lambda: [0.2])
    t_final: float = 0.5
    dt: float = 1e-3
    phases: list = field(default_factory=list)
    e0_modes: list = field(default_factory=list)   # transverse extra part of E0
    b0_modes: list = field(default_factory=list)
    gamma: float = 0.0                             # E0,B0 extra parts scale as eps^-gamma
    n_particles: int = 4096
    seed: int = 20240801
    alpha: float = 0.5
    moment_beta: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    delta0: float = 1.4
    delta1: float = 1.15
    eta: float = 0.4
    loss_beta: float = 0.5
    ck_n_iters: int = 10
    ck_n_time: int = 256
    w2_subsample: int = 1024
    snapshot_every: int = 25
    bootstrap_reps: int = 8
    output_dir: str = "out"
    mode: str = "pair"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        for eps in self.eps_list:
            if not (0.0 < eps <= 1.0):
                raise ValidationError(f"eps must lie in (0,1], got {eps}")
        if not (self.delta0 > self.delta1 > 1.0):
            raise ValidationError("need delta0 > delta1 > 1")
        n = round(self.t_final / self.dt)
        if n < 1 or abs(n * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise ValidationError(f"dt = {self.dt} must divide T = {self.t_final}")

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    @property
    def kappa(self) -> float:
        """min(alpha - (beta + 2 gamma2), 1 - (gamma1 + gamma2))."""
        return min(self.alpha - (self.moment_beta + 2 * self.gamma2), 1.0 - (self.gamma1 + self.gamma2))


# ----------------------------------------------------------------------
# mode-table text format
# ----------------------------------------------------------------------

def _format_modes(entries, dim: int) -> str:
    lines = []
    for comp, kvec, amp in entries:
        amp = complex(amp)
        ks = " ".join(str(int(k)) for k in kvec)
        lines.append(f"{int(comp)} {ks} {amp.real!r} {amp.imag!r}")
    return "\n".join(lines) if lines else "none"


def _parse_modes(text: str, dim: int):
    text = text.strip()
    if not text or text == "none":
        return []
    out = []
    for line in text.splitlines():
        parts = line.split()
        if len(parts) != dim + 3:
            raise ValidationError(f"mode line '{line}' should have comp, {dim} wavenumbers, re, im")
        comp = int(parts[0])
        kvec = tuple(int(p) for p in parts[1 : 1 + dim])
        amp = complex(float(parts[-2]), float(parts[-1]))
        out.append((comp, kvec, amp))
    return out


def save_config(cfg: RunConfig, path) -> None:
    cp = configparser.ConfigParser()
    cp["run"] = {
        "dim": str(cfg.dim),
        "cutoff": str(cfg.cutoff),
        "eps": ", ".join(repr(e) for e in cfg.eps_list),
        "t_final": repr(cfg.t_final),
        "dt": repr(cfg.dt),
        "n_particles": str(cfg.n_particles),
        "seed": str(cfg.seed),
        "mode": cfg.mode,
        "output_dir": cfg.output_dir,
        "snapshot_every": str(cfg.snapshot_every),
        "w2_subsample": str(cfg.w2_subsample),
        "bootstrap_reps": str(cfg.bootstrap_reps),
    }
    cp["hypotheses"] = {
        "alpha": repr(cfg.alpha),
        "moment_beta": repr(cfg.moment_beta),
        "gamma1": repr(cfg.gamma1),
        "gamma2": repr(cfg.gamma2),
    }
    cp["norms"] = {
        "delta0": repr(cfg.delta0),
        "delta1": repr(cfg.delta1),
        "eta": repr(cfg.eta),
        "loss_beta": repr(cfg.loss_beta),
        "ck_n_iters": str(cfg.ck_n_iters),
        "ck_n_time": str(cfg.ck_n_time),
    }
    cp["fields"] = {
        "gamma": repr(cfg.gamma),
        "e0_modes": "\n" + _format_modes(cfg.e0_modes, cfg.dim),
        "b0_modes": "\n" + _format_modes(cfg.b0_modes, cfg.dim),
    }
    for i, ph in enumerate(cfg.phases, start=1):
        cp[f"phase.{i}"] = {
            "mu": repr(ph.mu),
            "rho_modes": "\n" + _format_modes([(0, kv, a) for kv, a in ph.rho_modes], cfg.dim),
            "xi_modes": "\n" + _format_modes(ph.xi_modes, cfg.dim),
        }
    buf = io.StringIO()
    cp.write(buf)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_config(path) -> RunConfig:
    cp = configparser.ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    cp.read_string(text)
    try:
        run = cp["run"]
        dim = int(run["dim"])
        phases = []
        for name in sorted(s for s in cp.sections() if s.startswith("phase.")):
            sec = cp[name]
            rho = [(kv, a) for _, kv, a in _parse_modes(sec["rho_modes"], dim)]
            xi = _parse_modes(sec["xi_modes"], dim)
            phases.append(PhaseSpec(mu=float(sec["mu"]), rho_modes=rho, xi_modes=xi))
        cfg = RunConfig(
            dim=dim,
            cutoff=int(run["cutoff"]),
            eps_list=[float(v) for v in run["eps"].split(",")],
            t_final=float(run["t_final"]),
            dt=float(run["dt"]),
            phases=phases,
            e0_modes=_parse_modes(cp["fields"]["e0_modes"], dim),
            b0_modes=_parse_modes(cp["fields"]["b0_modes"], dim),
            gamma=float(cp["fields"]["gamma"]),
            n_particles=int(run["n_particles"]),
            seed=int(run["seed"]),
            alpha=float(cp["hypotheses"]["alpha"]),
            moment_beta=float(cp["hypotheses"]["moment_beta"]),
            gamma1=float(cp["hypotheses"]["gamma1"]),
            gamma2=float(cp["hypotheses"]["gamma2"]),
            delta0=float(cp["norms"]["delta0"]),
            delta1=float(cp["norms"]["delta1"]),
            eta=float(cp["norms"]["eta"]),
            loss_beta=float(cp["norms"]["loss_beta"]),
            ck_n_iters=int(cp["norms"]["ck_n_iters"]),
            ck_n_time=int(cp["norms"]["ck_n_time"]),
            w2_subsample=int(run["w2_subsample"]),
            snapshot_every=int(run["snapshot_every"]),
            bootstrap_reps=int(run["bootstrap_reps"]),
            output_dir=run["output_dir"],
            mode=run["mode"],
        )
    except KeyError as exc:
        raise ValidationError(f"config {path} is missing key {exc}") from exc
    return cfg


def resolve_config_path(name: str) -> Path:
    """Resolve 'bundled/<name>' against the packaged configs, else a file path."""
    if str(name).startswith("bundled/"):
        stem = str(name).split("/", 1)[1]
        ref = resources.files("vmvp") / "configs" / f"{stem}.cfg"
        with resources.as_file(ref) as p:
            if not p.exists():
                raise ValidationError(f"no bundled config named {stem}")
            return Path(p)
    p = Path(name)
    if not p.exists():
        raise ValidationError(f"config file {name} not found")
    return p


# ----------------------------------------------------------------------
# building initial states
# ----------------------------------------------------------------------

def build_ensemble(cfg: RunConfig, eps: float) -> PhaseEnsemble:
    phases = []
    for spec in cfg.phases:
        rho = SpectralField.from_modes(cfg.dim, cfg.cutoff, 1, [(0, kv, a) for kv, a in spec.rho_modes])
        xi = SpectralField.from_modes(cfg.dim, cfg.cutoff, cfg.dim, spec.xi_modes)
        phases.append(Phase(spec.mu, rho, xi))
    return PhaseEnsemble(tuple(phases), eps)


def build_initial_fields(cfg: RunConfig, eps: float):
    """(E0, B0) for a given eps: longitudinal part from the Poisson solve of
    the total density, transverse/magnetic extras scaled by eps^-gamma."""
    ens = build_ensemble(cfg, eps)
    rho0 = ens.rho_total()
    phi0 = solve_poisson(rho0)
    e0 = -1.0 * gradient(phi0)
    scale = eps ** (-cfg.gamma) if cfg.gamma else 1.0
    if cfg.e0_modes:
        extra = SpectralField.from_modes(cfg.dim, cfg.cutoff, cfg.dim, cfg.e0_modes)
        proj = leray_project(extra)
        if np.abs(proj.coeffs - extra.coeffs).max() > 1e-10 * max(1.0, np.abs(extra.coeffs).max()):
            raise ValidationError("configured e0_modes must be divergence-free (transverse)")
        if np.abs(mean(extra)).max() > 1e-12:
            raise ValidationError("configured e0_modes must have zero mean")
        e0 = e0 + scale * extra
    b_comps = 1 if cfg.dim == 2 else cfg.dim
    if cfg.b0_modes:
        b0 = scale * SpectralField.from_modes(cfg.dim, cfg.cutoff, b_comps, cfg.b0_modes)
    else:
        b0 = SpectralField.zeros(cfg.dim, cfg.cutoff, b_comps)
    return rho0, e0, b0


def build_em_state(cfg: RunConfig, eps: float) -> EMState:
    rho0, e0, b0 = build_initial_fields(cfg, eps)
    ens = build_ensemble(cfg, eps)
    from .multifluid import moments

    j0_mean = mean(moments(ens).j_total)
    return init_em_state(rho0, j0_mean, e0, b0, eps)
