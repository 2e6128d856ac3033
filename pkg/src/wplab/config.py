"""Flat key = value run configuration with section headers.

The format is deliberately nesting-free so configs diff cleanly and parse
trivially in any language::

    [run]
    experiment = main
    output = out/main_d1

    [potential]
    id = bump-coupling
    p = 2.0

    [dynamics]
    d = 1
    Lambda = 1.0
    T = 1.0
    eps_ladder = 2^-2..2^-7

    [packet]
    x0 = -1.5
    xi0 = 1.5
    mode = +

Every run echoes its fully resolved configuration back to the output
directory, so artifacts reconstruct the run exactly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, asdict
import math

import numpy as np

from .errors import ConfigError
from .experiments import Scenario
from .fields import PacketParams
from .potential import MatrixPotentialModel, make_model

__all__ = ["SimConfig", "load_config", "parse_ladder", "EXPERIMENTS"]

EXPERIMENTS = ("main", "perturbed", "breakdown", "superposition_diff",
               "superposition_same", "interaction", "growth", "audit")

_POTENTIAL_PARAMS = {
    "bump-coupling": ("p", "rho0_amplitude", "coupling_height",
                      "coupling_radius", "gap_floor"),
    "rotation-coupling": ("p", "angle_amplitude", "angle_radius", "gap_floor"),
    "synthetic-quadratic": ("gap_floor",),
    "constant-diagonal": ("level_plus", "level_minus", "gap_floor"),
}


def parse_ladder(text: str) -> tuple:
    """Ladder syntax: '2^-2..2^-7' (dyadic range) or '0.25, 0.125, ...'."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        def expo(s):
            s = s.strip()
            if not s.startswith("2^"):
                raise ConfigError(f"dyadic ladder bounds look like 2^-3, got {s!r}")
            return int(s[2:])
        a, b = expo(lo), expo(hi)
        if a < b:
            a, b = b, a
        return tuple(2.0 ** k for k in range(a, b - 1, -1))
    values = tuple(float(v) for v in text.split(","))
    if not values:
        raise ConfigError("empty eps ladder")
    for v in values:
        if not 0.0 < v <= 1.0:
            raise ConfigError(f"eps ladder value {v} outside (0, 1]")
    return tuple(sorted(values, reverse=True))


def _ladder_text(ladder: tuple) -> str:
    exps = [math.log2(e) for e in ladder]
    if all(abs(e - round(e)) < 1e-12 for e in exps):
        ints = [round(e) for e in exps]
        if ints == list(range(ints[0], ints[-1] - 1, -1)):
            return f"2^{ints[0]}..2^{ints[-1]}"
    return ", ".join(f"{e:.17g}" for e in ladder)


def _vector(text: str, d: int, what: str) -> tuple:
    vals = tuple(float(v) for v in str(text).split(","))
    if len(vals) == 1 and d > 1:
        raise ConfigError(f"{what} needs {d} comma-separated components")
    if len(vals) != d:
        raise ConfigError(f"{what} has {len(vals)} components, expected {d}")
    return vals


@dataclass
class SimConfig:
    """Fully resolved run configuration."""

    experiment: str
    output: str = "out"
    workers: int = 1
    seed: int | None = None            # reserved: pipeline is deterministic
    potential_id: str = "bump-coupling"
    potential_params: dict = field(default_factory=dict)
    d: int = 1
    Lambda: float = 1.0
    beta: float | None = None
    T: float = 1.0
    dt: float | None = None
    eps_ladder: tuple = ()
    snapshots: int = 64
    packets: tuple = ()
    envelope_halfwidth: float = 10.0
    envelope_points: int = 256
    gamma: float = 0.25                # interaction sublevel exponent
    gamma0: float | None = None        # perturbation scale exponent
    threshold: float = 0.4             # breakdown threshold
    t_max: float = 8.0                 # breakdown horizon
    audit_box: float = 12.0
    audit_samples: int = 20000
    memory_budget_bytes: int = 4 << 30

    def model(self) -> MatrixPotentialModel:
        return make_model(self.potential_id, **self.potential_params)

    def scenario(self) -> Scenario:
        correction = self.experiment in ("main", "perturbed")
        return Scenario(
            name=f"{self.experiment}-d{self.d}",
            model=self.model(),
            packets=self.packets,
            Lambda=self.Lambda,
            T=self.T,
            n_snapshots=self.snapshots,
            y_halfwidth=self.envelope_halfwidth,
            y_points=self.envelope_points,
            dt_user=self.dt,
            correction=correction,
            beta=self.beta,
        )

    def echo(self) -> str:
        """Resolved config in the same flat format (round-trip parseable)."""
        cp = configparser.ConfigParser()
        cp["run"] = {"experiment": self.experiment, "output": self.output,
                     "workers": str(self.workers)}
        if self.seed is not None:
            cp["run"]["seed"] = str(self.seed)
        cp["potential"] = {"id": self.potential_id,
                           **{k: f"{v:.17g}" for k, v in self.potential_params.items()}}
        dyn = {"d": str(self.d), "lambda": f"{self.Lambda:.17g}",
               "t": f"{self.T:.17g}", "snapshots": str(self.snapshots)}
        if self.eps_ladder:
            dyn["eps_ladder"] = _ladder_text(self.eps_ladder)
        if self.beta is not None:
            dyn["beta"] = f"{self.beta:.17g}"
        if self.dt is not None:
            dyn["dt"] = f"{self.dt:.17g}"
        cp["dynamics"] = dyn
        for i, p in enumerate(self.packets):
            sec = "packet" if i == 0 else "packet2"
            cp[sec] = {
                "x0": ", ".join(f"{v:.17g}" for v in p.x0),
                "xi0": ", ".join(f"{v:.17g}" for v in p.xi0),
                "mode": p.mode,
                "envelope": p.envelope,
                "envelope_width": f"{p.envelope_width:.17g}",
                "amplitude": f"{complex(p.amplitude):.17g}".strip("()"),
            }
        cp["envelope"] = {"halfwidth": f"{self.envelope_halfwidth:.17g}",
                          "points": str(self.envelope_points)}
        study = {"gamma": f"{self.gamma:.17g}",
                 "threshold": f"{self.threshold:.17g}",
                 "t_max": f"{self.t_max:.17g}",
                 "audit_box": f"{self.audit_box:.17g}",
                 "audit_samples": str(self.audit_samples)}
        if self.gamma0 is not None:
            study["gamma0"] = f"{self.gamma0:.17g}"
        cp["study"] = study
        buf = []
        for sec in cp.sections():
            buf.append(f"[{sec}]")
            for k, v in cp[sec].items():
                buf.append(f"{k} = {v}")
            buf.append("")
        return "\n".join(buf)


def _parse_packet(section, d: int) -> PacketParams:
    amp_text = section.get("amplitude", "1")
    try:
        amplitude = complex(amp_text.replace(" ", ""))
    except ValueError:
        raise ConfigError(f"cannot parse amplitude {amp_text!r}") from None
    return PacketParams(
        x0=_vector(section.get("x0", "0"), d, "x0"),
        xi0=_vector(section.get("xi0", "0"), d, "xi0"),
        mode=section.get("mode", "+").strip(),
        envelope=section.get("envelope", "gaussian"),
        envelope_width=section.getfloat("envelope_width", 1.0),
        amplitude=amplitude,
    )


def load_config(path) -> SimConfig:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    if "run" not in cp or "experiment" not in cp["run"]:
        raise ConfigError("config needs [run] experiment = <id>")
    experiment = cp["run"]["experiment"].strip()
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"known: {EXPERIMENTS}")

    pot = cp["potential"] if "potential" in cp else {}
    pot_id = pot.get("id", "bump-coupling").strip()
    if pot_id not in _POTENTIAL_PARAMS:
        raise ConfigError(f"unknown potential id {pot_id!r}")
    params = {}
    for key in pot:
        if key == "id":
            continue
        if key not in _POTENTIAL_PARAMS[pot_id]:
            raise ConfigError(f"potential {pot_id!r} has no parameter {key!r}")
        params[key] = float(pot[key])

    dyn = cp["dynamics"] if "dynamics" in cp else {}
    d = int(dyn.get("d", 1))
    if d not in (1, 2, 3):
        raise ConfigError("d must be 1, 2 or 3")
    Lambda = float(dyn.get("lambda", 1.0))
    if Lambda < 0:
        raise ConfigError("focusing guard: lambda must be >= 0 "
                          "(finite-time blow-up territory)")
    ladder_text = dyn.get("eps_ladder", "")
    from .experiments import EPS_LADDERS
    ladder = parse_ladder(ladder_text) if ladder_text else EPS_LADDERS[d]

    packets = []
    for sec in ("packet", "packet2"):
        if sec in cp:
            packets.append(_parse_packet(cp[sec], d))
    if not packets and experiment != "audit":
        raise ConfigError("config needs a [packet] section")
    if experiment in ("superposition_diff", "superposition_same",
                      "interaction") and len(packets) != 2:
        raise ConfigError(f"{experiment} needs [packet] and [packet2]")

    env = cp["envelope"] if "envelope" in cp else {}
    study = cp["study"] if "study" in cp else {}

    run = cp["run"]
    cfg = SimConfig(
        experiment=experiment,
        output=run.get("output", "out"),
        workers=int(run.get("workers", 1)),
        seed=int(run["seed"]) if "seed" in run else None,
        potential_id=pot_id,
        potential_params=params,
        d=d,
        Lambda=Lambda,
        beta=float(dyn["beta"]) if "beta" in dyn else None,
        T=float(dyn.get("t", 1.0)),
        dt=float(dyn["dt"]) if "dt" in dyn else None,
        eps_ladder=ladder,
        snapshots=int(dyn.get("snapshots", 64)),
        packets=tuple(packets),
        envelope_halfwidth=float(env.get("halfwidth", 10.0)),
        envelope_points=int(env.get("points", 256)),
        gamma=float(study.get("gamma", 0.25)),
        gamma0=float(study["gamma0"]) if "gamma0" in study else None,
        threshold=float(study.get("threshold", 0.4)),
        t_max=float(study.get("t_max", 8.0)),
        audit_box=float(study.get("audit_box", 12.0)),
        audit_samples=int(study.get("audit_samples", 20000)),
    )
    return cfg
